"""Cognitive-load signal pipeline: ECG/EEG preprocessing, interval and
waveform features, tree-ensemble classification, and cross-modal transfer."""

__version__ = "0.1.0"
