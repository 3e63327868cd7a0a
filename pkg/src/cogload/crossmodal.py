"""Training on one modality and scoring on the other.

Both feature tables are mapped into the shared 22-column waveform-feature
space: the ECG table contributes its waveform columns directly, and the
EEG grid ("<ch>.f<k>") is collapsed either by averaging each feature
across channels (channel_mean) or by exploding one instance per channel
(per_channel_instances). Features are then robust-standardized with the
median and IQR of the SOURCE table only, so nothing about the target
distribution leaks into the fit. A model trained on all source rows is
scored on all target rows.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import catch22 as _c22
from .errors import AlignmentError, InvalidArgumentError, TaskError
from .ml import EvalReport, FeatureTable, evaluate, task_view, train_model

__all__ = [
    "ALIGNMENTS",
    "TransferSpec",
    "to_common_space",
    "robust_standardize",
    "run_transfer",
    "run_transfer_pair",
]

ALIGNMENTS = ("channel_mean", "per_channel_instances")

# Defaults used when TransferSpec.model_params is None. Depth-1 boosting
# commits only to single-feature thresholds, which still line up after the
# cross-modality shift once both sides share the source's standardization;
# deeper trees encode feature interactions that do not survive it.
_TRANSFER_MODEL_DEFAULTS: dict[str, dict] = {
    "gb": {"n_rounds": 400, "learning_rate": 0.1, "max_depth": 1},
    "rf": {},
}


@dataclass(frozen=True)
class TransferSpec:
    task: str = "mc"
    model: str = "gb"
    alignment: str = "channel_mean"
    standardize: bool = True
    seed: int = 0
    model_params: dict | None = None

    def __post_init__(self):
        if self.alignment not in ALIGNMENTS:
            raise InvalidArgumentError(
                f"alignment must be one of {ALIGNMENTS}, got {self.alignment!r}"
            )
        if self.model not in ("rf", "gb"):
            raise InvalidArgumentError(f"model must be 'rf' or 'gb', got {self.model!r}")

    def resolved_params(self) -> dict:
        if self.model_params is not None:
            return dict(self.model_params)
        return dict(_TRANSFER_MODEL_DEFAULTS[self.model])


def _eeg_grid_channels(columns) -> tuple[str, ...] | None:
    """Channel prefixes if the columns form a complete "<ch>.f<k>" grid."""
    chans: list[str] = []
    for c in columns:
        if "." not in c:
            return None
        ch, _, suffix = c.rpartition(".")
        if not (suffix.startswith("f") and suffix[1:].isdigit()):
            return None
        if ch not in chans:
            chans.append(ch)
    want = [f"{ch}.f{k}" for ch in chans
            for k in range(1, len(_c22.FEATURE_NAMES) + 1)]
    return tuple(chans) if list(columns) == want else None


def to_common_space(table: FeatureTable, alignment: str = "channel_mean"
                    ) -> FeatureTable:
    """Project a modality's table onto the 22 shared waveform columns."""
    if alignment not in ALIGNMENTS:
        raise InvalidArgumentError(f"unknown alignment {alignment!r}")
    if all(name in table.columns for name in _c22.FEATURE_NAMES):
        return table.select_columns(_c22.FEATURE_NAMES)

    chans = _eeg_grid_channels(table.columns)
    if chans is None:
        raise AlignmentError(
            "table carries neither the canonical waveform columns nor a "
            "complete per-channel grid"
        )
    n_feat = len(_c22.FEATURE_NAMES)
    cube = table.values.reshape(table.n_rows, len(chans), n_feat)
    if alignment == "channel_mean":
        with np.errstate(invalid="ignore"):
            values = np.nanmean(cube, axis=1)
        return FeatureTable(_c22.FEATURE_NAMES, values, table.labels,
                            table.class_names, table.groups, table.trial_ids)
    # one training/test instance per channel, same label and subject
    values = cube.reshape(table.n_rows * len(chans), n_feat)
    labels = np.repeat(table.labels, len(chans))
    groups = np.repeat(table.groups, len(chans))
    trials = np.repeat(table.trial_ids, len(chans))
    return FeatureTable(_c22.FEATURE_NAMES, values, labels,
                        table.class_names, groups, trials)


def robust_standardize(source: FeatureTable, target: FeatureTable
                       ) -> tuple[FeatureTable, FeatureTable]:
    """Center/scale both tables by source-only medians and IQRs.

    Zero IQR leaves the column unscaled; NaN entries pass through untouched.
    """
    X = source.values
    med = np.nanmedian(X, axis=0)
    med = np.where(np.isnan(med), 0.0, med)
    with np.errstate(all="ignore"):
        q75 = np.nanpercentile(X, 75, axis=0)
        q25 = np.nanpercentile(X, 25, axis=0)
    iqr = q75 - q25
    iqr = np.where(np.isnan(iqr) | (iqr == 0.0), 1.0, iqr)

    def apply(t: FeatureTable) -> FeatureTable:
        return FeatureTable(t.columns, (t.values - med) / iqr, t.labels,
                            t.class_names, t.groups, t.trial_ids,
                            dict(t.flags))
    return apply(source), apply(target)


def run_transfer(source: FeatureTable, target: FeatureTable,
                 spec: TransferSpec = TransferSpec(),
                 direction: str = "source_to_target") -> EvalReport:
    """Train on every source row, evaluate on every target row."""
    src = task_view(to_common_space(source, spec.alignment), spec.task)
    tgt = task_view(to_common_space(target, spec.alignment), spec.task)
    if src.class_names != tgt.class_names:
        raise TaskError(
            f"label spaces disagree: {src.class_names} vs {tgt.class_names}"
        )
    if spec.standardize:
        src, tgt = robust_standardize(src, tgt)
    params = spec.resolved_params()
    model = train_model(src, spec.model, seed=spec.seed, **params)
    return evaluate(model, tgt, protocol={
        "direction": direction,
        "task": spec.task,
        "alignment": spec.alignment,
        "standardize": spec.standardize,
        "model_params": params,
        "n_train": src.n_rows,
        "seed": spec.seed,
    })


def run_transfer_pair(ecg_table: FeatureTable, eeg_table: FeatureTable,
                      spec: TransferSpec = TransferSpec()
                      ) -> dict[str, EvalReport]:
    """Both transfer directions under one protocol."""
    return {
        "ecg_to_eeg": run_transfer(ecg_table, eeg_table, spec, "ecg_to_eeg"),
        "eeg_to_ecg": run_transfer(eeg_table, ecg_table, spec, "eeg_to_ecg"),
    }
