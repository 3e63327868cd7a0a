"""Feature tables, splits, tree-ensemble models, and evaluation.

Both models are grown from scratch on a shared split-search core. Features
are pre-binned onto per-feature cut values taken from observed training
values (exact greedy: every unique value is a candidate, with a rank-spaced
fallback only past a large memory-guard cap), and
candidate splits are scored from bincount-accumulated per-bin statistics.
Because every threshold is an observed value and comparisons are `x <=
threshold`, predictions are invariant under any strictly monotone per-feature
transform applied consistently to train and test.

The random forest bootstraps rows and samples ceil(sqrt(d)) features per
node, scoring splits by Gini impurity decrease; leaves store class
distributions and the ensemble averages them. Gradient boosting fits one
regression tree per class per round on the softmax objective, using
second-order statistics: gain = 0.5 * (GL^2/(HL+l) + GR^2/(HR+l)
- G^2/(H+l)) - gamma, leaf weight = -G/(H+l), scaled by the learning rate.

Missing values are imputed with training-set medians stored on the model, so
test content never leaks into the imputation.
"""
from __future__ import annotations

import csv as _csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    AlignmentError,
    DegenerateFitError,
    FormatError,
    InvalidArgumentError,
    ParseError,
    SplitError,
    TaskError,
)

__all__ = [
    "TASKS",
    "FeatureTable",
    "task_view",
    "split",
    "RandomForestParams",
    "GradientBoostingParams",
    "TrainedEnsemble",
    "train_random_forest",
    "train_gradient_boosting",
    "train_model",
    "evaluate",
    "EvalReport",
    "feature_importance",
    "save_model",
    "load_model",
]

TASKS = ("mc", "bc", "fc")

_MAX_BINS = 65536
_GAIN_EPS = 1e-12


# ---------------------------------------------------------------------------
# feature table


class FeatureTable:
    """A feature matrix with labels, subject groups and trial provenance.

    values is (n_rows, n_cols) float64 with NaN marking missing entries;
    labels are indices into class_names; groups carry subject ids for
    grouped splitting. flags holds per-row diagnostic columns that are not
    model features but travel with the table through CSV round trips.
    """

    def __init__(self, columns, values, labels, class_names, groups, trial_ids,
                 flags: dict[str, np.ndarray] | None = None):
        self.columns = tuple(columns)
        self.values = np.asarray(values, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.class_names = tuple(class_names)
        self.groups = np.asarray(groups, dtype=object)
        self.trial_ids = np.asarray(trial_ids, dtype=np.int64)
        self.flags = {k: np.asarray(v) for k, v in (flags or {}).items()}
        self._validate()

    def _validate(self):
        n, d = self.values.shape if self.values.ndim == 2 else (-1, -1)
        if self.values.ndim != 2:
            raise InvalidArgumentError("values must be 2-D")
        if len(self.columns) != d:
            raise InvalidArgumentError(f"{len(self.columns)} names for {d} columns")
        if len(set(self.columns)) != d:
            raise InvalidArgumentError("duplicate feature columns")
        for arr, name in ((self.labels, "labels"), (self.groups, "groups"),
                          (self.trial_ids, "trial_ids")):
            if arr.shape != (n,):
                raise InvalidArgumentError(f"{name} must have one entry per row")
        if n and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise InvalidArgumentError("labels must index class_names")
        for k, v in self.flags.items():
            if v.shape != (n,):
                raise InvalidArgumentError(f"flag {k!r} must have one entry per row")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def missing_mask(self) -> np.ndarray:
        return np.isnan(self.values)

    def filter_rows(self, mask: np.ndarray) -> "FeatureTable":
        mask = np.asarray(mask)
        return FeatureTable(self.columns, self.values[mask], self.labels[mask],
                            self.class_names, self.groups[mask],
                            self.trial_ids[mask],
                            {k: v[mask] for k, v in self.flags.items()})

    def select_columns(self, names) -> "FeatureTable":
        missing = [c for c in names if c not in self.columns]
        if missing:
            raise AlignmentError(f"columns not in table: {missing}")
        idx = [self.columns.index(c) for c in names]
        return FeatureTable(tuple(names), self.values[:, idx], self.labels,
                            self.class_names, self.groups, self.trial_ids,
                            dict(self.flags))

    def relabel(self, new_names, new_labels) -> "FeatureTable":
        return FeatureTable(self.columns, self.values, new_labels, new_names,
                            self.groups, self.trial_ids, dict(self.flags))

    def label_names(self) -> np.ndarray:
        return np.asarray([self.class_names[i] for i in self.labels], dtype=object)

    # -- CSV round trip ------------------------------------------------------

    def to_csv(self, path: str | Path, header_lines: tuple[str, ...] = ()) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            writer = _csv.writer(fh)
            flag_cols = sorted(self.flags)
            writer.writerow(["subject", "trial", "label", *self.columns,
                             *(f"flag.{k}" for k in flag_cols)])
            names = self.label_names()
            for i in range(self.n_rows):
                row = [str(self.groups[i]), str(int(self.trial_ids[i])), names[i]]
                row += [_fmt_float(v) for v in self.values[i]]
                row += [_fmt_float(float(self.flags[k][i])) for k in flag_cols]
                writer.writerow(row)

    @staticmethod
    def from_csv(path: str | Path, class_names) -> "FeatureTable":
        path = Path(path)
        with open(path, newline="") as fh:
            rows = [r for r in _csv.reader(line for line in fh
                                           if not line.startswith("#"))]
        if not rows:
            raise ParseError(f"{path.name}: empty feature file")
        header = rows[0]
        if header[:3] != ["subject", "trial", "label"]:
            raise ParseError(
                f"{path.name}: expected subject,trial,label leading columns"
            )
        feat_cols = [c for c in header[3:] if not c.startswith("flag.")]
        flag_cols = [c[5:] for c in header[3:] if c.startswith("flag.")]
        n_feat = len(feat_cols)
        groups, trials, labels, vals = [], [], [], []
        flags: dict[str, list] = {k: [] for k in flag_cols}
        name_to_id = {c: i for i, c in enumerate(class_names)}
        for lineno, row in enumerate(rows[1:], start=2):
            if len(row) != len(header):
                raise ParseError(f"{path.name}:{lineno}: ragged row")
            groups.append(row[0])
            trials.append(int(row[1]))
            if row[2] not in name_to_id:
                raise ParseError(f"{path.name}:{lineno}: unknown label {row[2]!r}")
            labels.append(name_to_id[row[2]])
            vals.append([float(v) for v in row[3:3 + n_feat]])
            for k, v in zip(flag_cols, row[3 + n_feat:]):
                flags[k].append(float(v))
        return FeatureTable(feat_cols, np.asarray(vals, dtype=np.float64),
                            labels, class_names, groups, trials,
                            {k: np.asarray(v) for k, v in flags.items()})


def _fmt_float(v: float) -> str:
    return "nan" if math.isnan(v) else repr(float(v))


def task_view(table: FeatureTable, task: str) -> FeatureTable:
    """Restrict or relabel a 4-class base table into a task's label space.

    mc keeps Memory trials with digit-span classes (Five, Nine, Thirteen);
    bc maps everything onto JustListen vs Memory; fc keeps all four classes.
    """
    if task not in TASKS:
        raise TaskError(f"task must be one of {TASKS}, got {task!r}")
    names = table.label_names()
    if task == "fc":
        out = table
    elif task == "mc":
        keep = np.isin(names, ("Five", "Nine", "Thirteen"))
        sub = table.filter_rows(keep)
        classes = ("Five", "Nine", "Thirteen")
        ids = {c: i for i, c in enumerate(classes)}
        out = sub.relabel(classes, [ids[n] for n in sub.label_names()])
    else:
        classes = ("JustListen", "Memory")
        new = [0 if n == "JustListen" else 1 for n in names]
        out = table.relabel(classes, new)
    present = set(out.labels.tolist())
    missing = [c for i, c in enumerate(out.class_names) if i not in present]
    if missing:
        raise TaskError(f"task {task!r}: no rows for class(es) {missing}")
    return out


# ---------------------------------------------------------------------------
# splits


def split(table: FeatureTable, mode: str = "trial_stratified",
          test_fraction: float = 0.2, seed: int = 0):
    """Deterministic train/test split; returns (train_table, test_table).

    trial_stratified samples within each class, keeping class proportions to
    within one instance. subject_grouped holds out whole subjects until the
    test fraction is reached; it requires every class to appear in at least
    two subjects so both sides can contain every class.
    """
    if not 0.0 < test_fraction < 1.0:
        raise SplitError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n = table.n_rows
    if n < 2:
        raise SplitError("need at least 2 rows to split")
    rng = np.random.default_rng(seed)
    test_mask = np.zeros(n, dtype=bool)

    if mode == "trial_stratified":
        for c in range(len(table.class_names)):
            idx = np.flatnonzero(table.labels == c)
            if idx.size == 0:
                continue
            if idx.size < 2:
                raise SplitError(
                    f"class {table.class_names[c]!r} has {idx.size} row(s); "
                    "stratified split needs >= 2"
                )
            k = int(round(test_fraction * idx.size))
            k = min(max(k, 1), idx.size - 1)
            pick = rng.permutation(idx.size)[:k]
            test_mask[idx[pick]] = True
    elif mode == "subject_grouped":
        subjects = sorted(set(table.groups.tolist()))
        if len(subjects) < 2:
            raise SplitError("subject_grouped split needs >= 2 subjects")
        for c in range(len(table.class_names)):
            subj_c = set(table.groups[table.labels == c].tolist())
            if len(subj_c) < 2:
                raise SplitError(
                    f"class {table.class_names[c]!r} present in {len(subj_c)} "
                    "subject(s); grouped split needs >= 2"
                )
        order = rng.permutation(len(subjects))
        target = test_fraction * n
        count = 0
        for j in order:
            if count >= target:
                break
            s = subjects[j]
            pick = table.groups == s
            if count + pick.sum() >= n:     # never empty the training side
                continue
            test_mask |= pick
            count += int(pick.sum())
        if count == 0:
            raise SplitError("grouped split selected no test subject")
    else:
        raise SplitError(f"unknown split mode {mode!r}")

    if test_mask.all() or not test_mask.any():
        raise SplitError("split produced an empty side")
    return table.filter_rows(~test_mask), table.filter_rows(test_mask)


# ---------------------------------------------------------------------------
# binned split search


class _Binned:
    """Per-feature cut values (observed data values) and bin codes."""

    def __init__(self, X: np.ndarray):
        n, d = X.shape
        self.cuts: list[np.ndarray] = []
        codes = np.empty((n, d), dtype=np.int32)
        for f in range(d):
            col = X[:, f]
            uniq = np.unique(col)
            if uniq.size > _MAX_BINS:
                ranks = np.floor(np.arange(_MAX_BINS) * (uniq.size - 1)
                                 / (_MAX_BINS - 1)).astype(np.int64)
                uniq = uniq[np.unique(ranks)]
            self.cuts.append(uniq)
            codes[:, f] = np.searchsorted(uniq, col, side="left")
        self.codes = codes
        self.n_bins = np.asarray([c.size for c in self.cuts], dtype=np.int64)
        self.offsets = np.concatenate(([0], np.cumsum(self.n_bins)))
        self.total_bins = int(self.offsets[-1])


@dataclass
class _Tree:
    feature: np.ndarray      # int32, -1 at leaves
    threshold: np.ndarray    # float64
    left: np.ndarray         # int32
    right: np.ndarray        # int32
    value: np.ndarray        # (n_nodes, K) distributions or (n_nodes, 1) weights

    def leaf_index(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int32)
        feat = self.feature[node]
        active = feat >= 0
        while active.any():
            idx = np.flatnonzero(active)
            f = feat[idx]
            go_left = X[idx, f] <= self.threshold[node[idx]]
            nxt = np.where(go_left, self.left[node[idx]], self.right[node[idx]])
            node[idx] = nxt
            feat = self.feature[node]
            active = feat >= 0
        return node

    def to_jsonable(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": [float(t) for t in self.threshold],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": [[float(v) for v in row] for row in self.value],
        }

    @staticmethod
    def from_jsonable(obj: dict) -> "_Tree":
        return _Tree(
            feature=np.asarray(obj["feature"], dtype=np.int32),
            threshold=np.asarray(obj["threshold"], dtype=np.float64),
            left=np.asarray(obj["left"], dtype=np.int32),
            right=np.asarray(obj["right"], dtype=np.int32),
            value=np.asarray(obj["value"], dtype=np.float64),
        )


class _TreeBuilder:
    def __init__(self, n_values: int):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[np.ndarray] = []
        self._n_values = n_values

    def add(self, value: np.ndarray) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        return len(self.feature) - 1

    def make_internal(self, node: int, feature: int, threshold: float,
                      left: int, right: int) -> None:
        self.feature[node] = feature
        self.threshold[node] = threshold
        self.left[node] = left
        self.right[node] = right

    def build(self) -> _Tree:
        return _Tree(
            feature=np.asarray(self.feature, dtype=np.int32),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            value=np.vstack(self.value) if self.value
            else np.zeros((0, self._n_values)),
        )


def _segment_prefix(values: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Cumulative sums restarted at each feature's bin segment."""
    out = np.cumsum(values, dtype=np.float64)
    shift = np.zeros_like(out)
    starts = offsets[:-1]
    base = np.concatenate(([0.0], out[offsets[1:-1] - 1])) if offsets.size > 2 \
        else np.zeros(starts.size)
    for i, s in enumerate(starts):
        shift[s:offsets[i + 1]] = base[i]
    return out - shift


def _grow_rf_tree(binned: _Binned, y: np.ndarray, n_classes: int,
                  rows: np.ndarray, rng: np.random.Generator,
                  max_depth: int | None, min_leaf: int,
                  features_per_split: int, importance: np.ndarray) -> _Tree:
    codes = binned.codes
    n_total = rows.size
    depth_cap = max_depth if max_depth is not None else 1 << 30
    builder = _TreeBuilder(n_classes)
    # (rows, depth, parent, is_left); parent -1 = root
    stack: list[tuple[np.ndarray, int, int, bool]] = [(rows, 0, -1, False)]
    while stack:
        node_rows, depth, parent, is_left = stack.pop()
        m = node_rows.size
        counts = np.bincount(y[node_rows], minlength=n_classes).astype(np.float64)
        dist = counts / m
        node_id = builder.add(dist)
        if parent >= 0:
            if is_left:
                builder.left[parent] = node_id
            else:
                builder.right[parent] = node_id
        gini = 1.0 - float((dist * dist).sum())
        if gini <= 0.0 or depth >= depth_cap or m < 2 * min_leaf:
            continue

        feats = np.sort(rng.choice(codes.shape[1], size=features_per_split,
                                   replace=False))
        sub_offsets = np.concatenate(
            ([0], np.cumsum(binned.n_bins[feats]))).astype(np.int64)
        local = codes[np.ix_(node_rows, feats)]
        flat = (local + sub_offsets[:-1][None, :]).ravel()
        width = int(sub_offsets[-1])
        # per-class bin counts in one bincount over (bin, class) pairs
        pair = flat * n_classes + np.repeat(y[node_rows], feats.size)
        cls_counts = np.bincount(pair, minlength=width * n_classes) \
            .reshape(width, n_classes).astype(np.float64)
        left_counts = np.empty_like(cls_counts)
        for k in range(n_classes):
            left_counts[:, k] = _segment_prefix(cls_counts[:, k], sub_offsets)
        n_left = left_counts.sum(axis=1)
        n_right = m - n_left
        right_counts = counts[None, :] - left_counts
        valid = (n_left >= min_leaf) & (n_right >= min_leaf)
        # last bin of each feature puts everything left; exclude it
        valid[sub_offsets[1:] - 1] = False
        with np.errstate(invalid="ignore", divide="ignore"):
            gl = 1.0 - (left_counts ** 2).sum(axis=1) / np.maximum(n_left, 1) ** 2
            gr = 1.0 - (right_counts ** 2).sum(axis=1) / np.maximum(n_right, 1) ** 2
            gain = gini - (n_left * gl + n_right * gr) / m
        gain[~valid] = -np.inf
        best = int(np.argmax(gain))
        if gain[best] <= _GAIN_EPS:
            continue
        f_pos = int(np.searchsorted(sub_offsets, best, side="right") - 1)
        f = int(feats[f_pos])
        cut_idx = best - int(sub_offsets[f_pos])
        threshold = float(binned.cuts[f][cut_idx])
        go_left = codes[node_rows, f] <= cut_idx
        importance[f] += (m / n_total) * float(gain[best])
        # placeholder children; right pushed first so the left child grows next
        builder.make_internal(node_id, f, threshold, -1, -1)
        stack.append((node_rows[~go_left], depth + 1, node_id, False))
        stack.append((node_rows[go_left], depth + 1, node_id, True))
    return builder.build()


def _grow_gb_tree(binned: _Binned, g: np.ndarray, h: np.ndarray,
                  rows: np.ndarray, max_depth: int, reg_lambda: float,
                  gamma: float, importance: np.ndarray) -> _Tree:
    codes = binned.codes
    offsets = binned.offsets
    n_total = rows.size
    builder = _TreeBuilder(1)
    stack: list[tuple[np.ndarray, int, int, bool]] = [(rows, 0, -1, False)]
    while stack:
        node_rows, depth, parent, is_left = stack.pop()
        m = node_rows.size
        g_sum = float(g[node_rows].sum())
        h_sum = float(h[node_rows].sum())
        weight = -g_sum / (h_sum + reg_lambda)
        node_id = builder.add(np.asarray([weight]))
        if parent >= 0:
            if is_left:
                builder.left[parent] = node_id
            else:
                builder.right[parent] = node_id
        if depth >= max_depth or m < 2:
            continue

        local = codes[node_rows]
        flat = (local + offsets[:-1][None, :]).ravel()
        rep_g = np.repeat(g[node_rows], codes.shape[1])
        rep_h = np.repeat(h[node_rows], codes.shape[1])
        bin_g = np.bincount(flat, weights=rep_g, minlength=binned.total_bins)
        bin_h = np.bincount(flat, weights=rep_h, minlength=binned.total_bins)
        bin_n = np.bincount(flat, minlength=binned.total_bins).astype(np.float64)
        gl = _segment_prefix(bin_g, offsets)
        hl = _segment_prefix(bin_h, offsets)
        nl = _segment_prefix(bin_n, offsets)
        gr = g_sum - gl
        hr = h_sum - hl
        nr = m - nl
        parent_term = g_sum * g_sum / (h_sum + reg_lambda)
        gain = 0.5 * (gl * gl / (hl + reg_lambda) + gr * gr / (hr + reg_lambda)
                      - parent_term) - gamma
        valid = (nl >= 1) & (nr >= 1)
        valid[offsets[1:] - 1] = False
        gain[~valid] = -np.inf
        best = int(np.argmax(gain))
        if gain[best] <= _GAIN_EPS:
            continue
        f = int(np.searchsorted(offsets, best, side="right") - 1)
        cut_idx = best - int(offsets[f])
        threshold = float(binned.cuts[f][cut_idx])
        go_left = codes[node_rows, f] <= cut_idx
        importance[f] += (m / n_total) * float(gain[best])
        builder.make_internal(node_id, f, threshold, -1, -1)
        stack.append((node_rows[~go_left], depth + 1, node_id, False))
        stack.append((node_rows[go_left], depth + 1, node_id, True))
    return builder.build()


# ---------------------------------------------------------------------------
# trained models


@dataclass(frozen=True)
class RandomForestParams:
    n_trees: int = 300
    max_depth: int | None = None
    min_leaf: int = 1
    features_per_split: int | None = None   # None -> ceil(sqrt(d))
    seed: int = 0


@dataclass(frozen=True)
class GradientBoostingParams:
    n_rounds: int = 200
    learning_rate: float = 0.1
    max_depth: int = 6
    reg_lambda: float = 1.0
    gamma: float = 0.0
    seed: int = 0


class TrainedEnsemble:
    """A fitted forest or boosting model with its full protocol context."""

    def __init__(self, kind, trees, class_names, feature_names, impute_values,
                 params: dict, importance: np.ndarray,
                 learning_rate: float = 1.0, train_curve=()):
        self.kind = kind
        self.trees = trees
        self.class_names = tuple(class_names)
        self.feature_names = tuple(feature_names)
        self.impute_values = np.asarray(impute_values, dtype=np.float64)
        self.params = dict(params)
        self.importance = np.asarray(importance, dtype=np.float64)
        self.learning_rate = float(learning_rate)
        self.train_curve = tuple(train_curve)

    def _prepare(self, table: FeatureTable) -> np.ndarray:
        if tuple(table.columns) != self.feature_names:
            missing = [c for c in self.feature_names if c not in table.columns]
            extra = [c for c in table.columns if c not in self.feature_names]
            if missing or extra:
                raise AlignmentError(
                    f"feature schema mismatch: missing {missing}, unexpected {extra}"
                )
            table = table.select_columns(self.feature_names)
        X = table.values.copy()
        nan_at = np.isnan(X)
        if nan_at.any():
            X[nan_at] = np.broadcast_to(self.impute_values, X.shape)[nan_at]
        return X

    def predict_proba_matrix(self, X: np.ndarray) -> np.ndarray:
        K = len(self.class_names)
        if self.kind == "random_forest":
            acc = np.zeros((X.shape[0], K))
            for tree in self.trees:
                acc += tree.value[tree.leaf_index(X)]
            return acc / len(self.trees)
        scores = np.zeros((X.shape[0], K))
        for round_trees in self.trees:
            for k, tree in enumerate(round_trees):
                scores[:, k] += self.learning_rate * tree.value[tree.leaf_index(X), 0]
        return _softmax(scores)

    def predict_proba(self, table: FeatureTable) -> np.ndarray:
        return self.predict_proba_matrix(self._prepare(table))

    def predict(self, table: FeatureTable) -> np.ndarray:
        return np.argmax(self.predict_proba(table), axis=1)


def _softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _check_trainable(table: FeatureTable) -> tuple[np.ndarray, np.ndarray]:
    if table.n_rows < 2:
        raise DegenerateFitError("need at least 2 training rows")
    present = np.unique(table.labels)
    if present.size < 2:
        raise DegenerateFitError(
            f"training data contains a single class "
            f"({table.class_names[int(present[0])] if present.size else 'none'})"
        )
    X = table.values.copy()
    medians = np.empty(X.shape[1])
    for j in range(X.shape[1]):
        col = X[:, j]
        finite = col[~np.isnan(col)]
        medians[j] = float(np.median(finite)) if finite.size else 0.0
        col[np.isnan(col)] = medians[j]
    return X, medians


def train_random_forest(table: FeatureTable,
                        params: RandomForestParams = RandomForestParams()
                        ) -> TrainedEnsemble:
    X, medians = _check_trainable(table)
    n, d = X.shape
    K = len(table.class_names)
    fps = params.features_per_split or int(math.ceil(math.sqrt(d)))
    fps = min(fps, d)
    binned = _Binned(X)
    y = table.labels
    importance = np.zeros(d)
    trees = []
    seeds = np.random.SeedSequence(params.seed).spawn(params.n_trees)
    for t in range(params.n_trees):
        rng = np.random.default_rng(seeds[t])
        rows = rng.integers(0, n, size=n)
        trees.append(_grow_rf_tree(binned, y, K, rows, rng, params.max_depth,
                                   params.min_leaf, fps, importance))
    total = importance.sum()
    if total > 0:
        importance = importance / total
    return TrainedEnsemble("random_forest", trees, table.class_names,
                           table.columns, medians,
                           {"n_trees": params.n_trees,
                            "max_depth": params.max_depth,
                            "min_leaf": params.min_leaf,
                            "features_per_split": fps,
                            "seed": params.seed},
                           importance)


def train_gradient_boosting(table: FeatureTable,
                            params: GradientBoostingParams = GradientBoostingParams()
                            ) -> TrainedEnsemble:
    X, medians = _check_trainable(table)
    n, d = X.shape
    K = len(table.class_names)
    binned = _Binned(X)
    y = table.labels
    y_hot = np.zeros((n, K))
    y_hot[np.arange(n), y] = 1.0
    rows = np.arange(n)
    scores = np.zeros((n, K))
    importance = np.zeros(d)
    rounds = []
    curve = []
    for r in range(params.n_rounds):
        p = _softmax(scores)
        curve.append(float(-np.mean(np.log(np.maximum(p[np.arange(n), y], 1e-15)))))
        grad = p - y_hot
        hess = p * (1.0 - p)
        round_trees = []
        for k in range(K):
            tree = _grow_gb_tree(binned, grad[:, k], hess[:, k], rows,
                                 params.max_depth, params.reg_lambda,
                                 params.gamma, importance)
            scores[:, k] += params.learning_rate * tree.value[tree.leaf_index(X), 0]
            round_trees.append(tree)
        rounds.append(round_trees)
    p = _softmax(scores)
    curve.append(float(-np.mean(np.log(np.maximum(p[np.arange(n), y], 1e-15)))))
    total = importance.sum()
    if total > 0:
        importance = importance / total
    return TrainedEnsemble("gradient_boosting", rounds, table.class_names,
                           table.columns, medians,
                           {"n_rounds": params.n_rounds,
                            "learning_rate": params.learning_rate,
                            "max_depth": params.max_depth,
                            "reg_lambda": params.reg_lambda,
                            "gamma": params.gamma,
                            "seed": params.seed},
                           importance, learning_rate=params.learning_rate,
                           train_curve=curve)


def train_model(table: FeatureTable, model: str, seed: int = 0,
                **overrides) -> TrainedEnsemble:
    if model == "rf":
        return train_random_forest(table, RandomForestParams(seed=seed, **overrides))
    if model == "gb":
        return train_gradient_boosting(table, GradientBoostingParams(seed=seed,
                                                                     **overrides))
    raise InvalidArgumentError(f"unknown model {model!r} (expected 'rf' or 'gb')")


# ---------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    macro_f1: float
    weighted_f1: float
    roc_auc: float | None
    confusion: tuple            # K x K, rows = true class, cols = predicted
    class_names: tuple
    per_class: tuple            # dicts: precision/recall/f1/support
    n_test: int
    protocol: dict

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "weighted_f1": self.weighted_f1,
            "roc_auc": self.roc_auc,
            "confusion": [list(r) for r in self.confusion],
            "class_names": list(self.class_names),
            "per_class": [dict(d) for d in self.per_class],
            "n_test": self.n_test,
            "protocol": dict(self.protocol),
        }


def metrics_from_confusion(cm: np.ndarray) -> dict:
    """Accuracy, per-class precision/recall/F1 and the macro/weighted means.

    Zero denominators yield zero scores rather than NaN.
    """
    cm = np.asarray(cm, dtype=np.float64)
    k = cm.shape[0]
    total = cm.sum()
    tp = np.diag(cm)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = np.where(support > 0, tp / support, 0.0)
        pr = precision + recall
        f1 = np.where(pr > 0, 2 * precision * recall / np.where(pr > 0, pr, 1.0), 0.0)
    accuracy = float(tp.sum() / total) if total > 0 else 0.0
    weighted = float((f1 * support).sum() / support.sum()) if support.sum() else 0.0
    return {
        "accuracy": accuracy,
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "support": support,
        "macro_f1": float(f1.mean()) if k else 0.0,
        "weighted_f1": weighted,
    }


def _roc_auc_binary(y_true: np.ndarray, score: np.ndarray) -> float:
    """Rank-statistic AUC with midrank tie handling."""
    pos = y_true == 1
    n_pos = int(pos.sum())
    n_neg = y_true.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return math.nan
    order = np.argsort(score, kind="stable")
    ranks = np.empty(score.size)
    sorted_scores = score[order]
    i = 0
    r = 1.0
    while i < score.size:
        j = i
        while j + 1 < score.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * ((i + 1) + (j + 1))
        i = j + 1
    rank_sum = float(ranks[pos].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def evaluate(model: TrainedEnsemble, table: FeatureTable,
             protocol: dict | None = None) -> EvalReport:
    """Predict on a table and assemble the metric report.

    The test table must carry the model's class list; columns are aligned by
    name (order-insensitive) and missing values imputed with the model's
    training medians.
    """
    if tuple(table.class_names) != model.class_names:
        raise AlignmentError(
            f"label spaces differ: model {model.class_names}, "
            f"table {table.class_names}"
        )
    proba = model.predict_proba(table)
    pred = np.argmax(proba, axis=1)
    k = len(model.class_names)
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (table.labels, pred), 1)
    m = metrics_from_confusion(cm)
    auc = None
    if k == 2:
        auc = _roc_auc_binary(table.labels, proba[:, 1])
        auc = None if math.isnan(auc) else float(auc)
    per_class = tuple(
        {"class": model.class_names[i],
         "precision": float(m["precision"][i]),
         "recall": float(m["recall"][i]),
         "f1": float(m["f1"][i]),
         "support": int(m["support"][i])}
        for i in range(k)
    )
    full_protocol = {
        "model": model.kind,
        "params": dict(model.params),
        "features": list(model.feature_names),
        "classes": list(model.class_names),
    }
    full_protocol.update(protocol or {})
    return EvalReport(
        accuracy=m["accuracy"],
        macro_f1=m["macro_f1"],
        weighted_f1=m["weighted_f1"],
        roc_auc=auc,
        confusion=tuple(tuple(int(v) for v in row) for row in cm),
        class_names=model.class_names,
        per_class=per_class,
        n_test=table.n_rows,
        protocol=full_protocol,
    )


def feature_importance(model: TrainedEnsemble) -> list[tuple[str, float]]:
    """Normalized split-gain importance, descending; ties break by name."""
    pairs = list(zip(model.feature_names, model.importance))
    pairs.sort(key=lambda p: (-p[1], p[0]))
    return [(name, float(v)) for name, v in pairs]


# ---------------------------------------------------------------------------
# serialization


_FORMAT = "cogload-ensemble"
_FORMAT_VERSION = 1


def save_model(model: TrainedEnsemble, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if model.kind == "random_forest":
        trees = [t.to_jsonable() for t in model.trees]
    else:
        trees = [[t.to_jsonable() for t in rnd] for rnd in model.trees]
    doc = {
        "format": _FORMAT,
        "format_version": _FORMAT_VERSION,
        "kind": model.kind,
        "params": model.params,
        "class_names": list(model.class_names),
        "feature_names": list(model.feature_names),
        "impute_values": [float(v) for v in model.impute_values],
        "learning_rate": model.learning_rate,
        "importance": [float(v) for v in model.importance],
        "train_curve": list(model.train_curve),
        "trees": trees,
    }
    path.write_text(json.dumps(doc, indent=2) + "\n")


def load_model(path: str | Path) -> TrainedEnsemble:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path.name}: line {exc.lineno}: {exc.msg}") from None
    if doc.get("format") != _FORMAT:
        raise FormatError(f"{path.name}: not a saved ensemble")
    if doc.get("kind") == "random_forest":
        trees = [_Tree.from_jsonable(t) for t in doc["trees"]]
    else:
        trees = [[_Tree.from_jsonable(t) for t in rnd] for rnd in doc["trees"]]
    return TrainedEnsemble(
        kind=doc["kind"],
        trees=trees,
        class_names=doc["class_names"],
        feature_names=doc["feature_names"],
        impute_values=doc["impute_values"],
        params=doc["params"],
        importance=doc["importance"],
        learning_rate=doc.get("learning_rate", 1.0),
        train_curve=doc.get("train_curve", ()),
    )
