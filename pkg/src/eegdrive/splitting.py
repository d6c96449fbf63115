"""Temporal-stratified train/test splitting and sliding-window extraction.

The split works per class: a class's samples are taken in chronological
order, cut into a fixed number of contiguous chunks, and the head of every
chunk goes to train with the tail going to test. Both partitions are then
re-sorted globally by time, windowed with a sliding window over the
partition's own sample sequence, and the train windows are optionally
rebalanced by random oversampling with replacement.

Train/test windows can never share a source sample: the partitions are
disjoint index sets and a window only draws from its own partition. The
provenance carried by every window lets ``check_no_leakage`` verify that
directly, and ``build_split`` runs the check on every invocation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .labels import LabeledSamples
from .session import CommandLabel, EegRecording, N_CLASSES


@dataclass(frozen=True)
class SplitConfig:
    n_chunks: int = 100
    train_fraction: float = 0.7
    window_len: int = 125
    overlap_fraction: float = 0.5
    oversample: bool = True
    rng_seed: int = 0
    gap_break_ns: int | None = None

    def __post_init__(self):
        if self.n_chunks < 1:
            raise ValueError("n_chunks must be >= 1")
        if not (0 < self.train_fraction < 1):
            raise ValueError("train_fraction must lie in (0, 1)")
        if self.window_len < 1:
            raise ValueError("window_len must be >= 1")
        if not (0 <= self.overlap_fraction < 1):
            raise ValueError("overlap_fraction must lie in [0, 1)")
        if self.gap_break_ns is not None and self.gap_break_ns <= 0:
            raise ValueError("gap_break_ns must be positive when set")

    @property
    def hop(self) -> int:
        return max(1, math.floor(self.window_len * (1.0 - self.overlap_fraction)))


_FRAC_DENOM = 10**6  # train_fraction quantum; keeps chunk arithmetic exact


def _chunk_train_counts(sizes: list[int], train_fraction: float) -> list[int]:
    """How many leading samples of each chunk go to train.

    Base allocation is max(1, floor(f*m)) per chunk. Because the floor loses
    up to one sample per chunk, small chunks would drift far below f overall
    (100 chunks of 4 at f=0.7 would train only half the class), so the
    shortfall against the class-level target round(f*n) is handed back one
    sample at a time, largest fractional part first, earliest chunk on ties.
    The head-to-train / tail-to-test shape of every chunk is preserved.
    """
    num = round(train_fraction * _FRAC_DENOM)
    counts = [max(1, (m * num) // _FRAC_DENOM) for m in sizes]
    n = sum(sizes)
    target = (2 * n * num + _FRAC_DENOM) // (2 * _FRAC_DENOM)  # round half up
    deficit = target - sum(counts)
    if deficit > 0:
        order = sorted(range(len(sizes)),
                       key=lambda i: (-((sizes[i] * num) % _FRAC_DENOM), i))
        while deficit > 0:
            progressed = False
            for i in order:
                if deficit == 0:
                    break
                if counts[i] < sizes[i]:
                    counts[i] += 1
                    deficit -= 1
                    progressed = True
            if not progressed:
                break
    return counts


def stratified_temporal_split(
    labeled: LabeledSamples, cfg: SplitConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Chunked per-class split; returns (train, test) positions into ``labeled``.

    Each class with n samples is cut into k = min(n_chunks, n) contiguous
    chunks of sizes floor(n/k), the first n mod k chunks one larger. The
    head of every chunk goes to train and the tail to test, with per-chunk
    head lengths from ``_chunk_train_counts`` so the class-level train
    fraction matches ``cfg.train_fraction`` to within rounding. Output
    position arrays are sorted by time.
    """
    if len(labeled) == 0:
        raise DataError("no labelled samples to split")
    if np.any(np.diff(labeled.t_ns) <= 0):
        raise DataError("labelled samples must be strictly time-ordered")
    train: list[np.ndarray] = []
    test: list[np.ndarray] = []
    for code in range(N_CLASSES):
        pos = np.nonzero(labeled.labels == code)[0]
        n = len(pos)
        if n == 0:
            continue
        k = min(cfg.n_chunks, n)
        base, extra = divmod(n, k)
        sizes = [base + (1 if c < extra else 0) for c in range(k)]
        heads = _chunk_train_counts(sizes, cfg.train_fraction)
        start = 0
        for m, n_train in zip(sizes, heads):
            chunk = pos[start : start + m]
            start += m
            train.append(chunk[:n_train])
            test.append(chunk[n_train:])
    train_pos = np.sort(np.concatenate(train))
    test_pos = np.sort(np.concatenate(test)) if test else np.empty(0, dtype=np.int64)
    return train_pos, test_pos


def majority_label(codes: np.ndarray) -> int:
    """Most frequent code; ties resolve to the lowest code."""
    counts = np.bincount(codes, minlength=N_CLASSES)
    return int(np.argmax(counts))


@dataclass(frozen=True)
class LabeledWindow:
    """One training example: a (C, window_len) slab plus its majority label.

    ``source_indices`` records exactly which recording columns the window
    was cut from; that is the provenance used for leakage checks.
    """

    data: np.ndarray  # float32 (C, S)
    label: CommandLabel
    start_t_ns: int
    partition: str  # "train" | "test"
    source_indices: np.ndarray


def extract_windows(
    rec: EegRecording,
    labeled: LabeledSamples,
    positions: np.ndarray,
    cfg: SplitConfig,
    partition: str,
) -> list[LabeledWindow]:
    """Slide a window over one partition's time-ordered sample sequence.

    Windows of ``window_len`` partition samples advance by ``cfg.hop``; each
    takes the majority label of the samples it covers. When
    ``cfg.gap_break_ns`` is set, any window spanning a timestamp gap larger
    than that is dropped instead of bridging the gap.
    """
    positions = np.asarray(positions, dtype=np.int64)
    s = cfg.window_len
    out: list[LabeledWindow] = []
    if len(positions) < s:
        return out
    src_all = labeled.indices[positions]
    t_all = labeled.t_ns[positions]
    lab_all = labeled.labels[positions]
    for start in range(0, len(positions) - s + 1, cfg.hop):
        t = t_all[start : start + s]
        if cfg.gap_break_ns is not None and int(np.diff(t).max()) > cfg.gap_break_ns:
            continue
        src = src_all[start : start + s]
        data = rec.samples[:, src].astype(np.float32)
        out.append(
            LabeledWindow(
                data=data,
                label=CommandLabel(majority_label(lab_all[start : start + s])),
                start_t_ns=int(t[0]),
                partition=partition,
                source_indices=src.copy(),
            )
        )
    return out


def oversample_train(
    train: list[LabeledWindow], seed: int
) -> list[LabeledWindow]:
    """Duplicate minority-class windows until every present class matches the
    largest one. Originals are all retained; duplicates are drawn uniformly
    with replacement, deterministically for a given seed."""
    if not train:
        raise DataError("cannot oversample an empty train partition")
    rng = np.random.default_rng(seed)
    by_class: dict[int, list[LabeledWindow]] = {}
    for w in train:
        by_class.setdefault(int(w.label), []).append(w)
    target = max(len(v) for v in by_class.values())
    additions: list[LabeledWindow] = []
    for code in sorted(by_class):
        pool = by_class[code]
        need = target - len(pool)
        if need > 0:
            picks = rng.integers(0, len(pool), size=need)
            additions.extend(pool[int(p)] for p in picks)
    return train + additions


@dataclass
class SplitDataset:
    """Windowed train/test partitions, each chronological by window start."""

    train: list[LabeledWindow]
    test: list[LabeledWindow]
    absent_classes: tuple[int, ...] = ()
    pre_oversample_counts: np.ndarray = field(
        default_factory=lambda: np.zeros(N_CLASSES, dtype=np.int64)
    )

    def source_index_set(self, partition: str) -> set[int]:
        windows = self.train if partition == "train" else self.test
        out: set[int] = set()
        for w in windows:
            out.update(int(i) for i in w.source_indices)
        return out


def check_no_leakage(ds: SplitDataset) -> None:
    """Raise if any recording sample appears in both partitions."""
    overlap = ds.source_index_set("train") & ds.source_index_set("test")
    if overlap:
        raise DataError(
            f"train/test leakage: {len(overlap)} shared source samples "
            f"(first: {sorted(overlap)[:5]})"
        )


def windows_to_arrays(windows: list[LabeledWindow]) -> tuple[np.ndarray, np.ndarray]:
    """Stack windows into a (n, C, S) float32 tensor and an int64 label vector."""
    if not windows:
        raise DataError("no windows to stack")
    data = np.stack([w.data for w in windows]).astype(np.float32)
    labels = np.array([int(w.label) for w in windows], dtype=np.int64)
    return data, labels


def build_split(
    rec: EegRecording, labeled: LabeledSamples, cfg: SplitConfig
) -> SplitDataset:
    """Full pipeline: split, window both partitions, oversample train.

    The returned dataset notes which classes were absent from the labelled
    stream, keeps the pre-oversampling train window counts (the class-weight
    basis for training), and is verified leakage-free before returning.
    """
    train_pos, test_pos = stratified_temporal_split(labeled, cfg)
    train_w = extract_windows(rec, labeled, train_pos, cfg, "train")
    test_w = extract_windows(rec, labeled, test_pos, cfg, "test")
    pre_counts = np.bincount(
        [int(w.label) for w in train_w], minlength=N_CLASSES
    ).astype(np.int64)
    if cfg.oversample and train_w:
        train_w = oversample_train(train_w, cfg.rng_seed)
        train_w = sorted(train_w, key=lambda w: w.start_t_ns)  # stable: originals first
    counts = labeled.class_counts()
    ds = SplitDataset(
        train=train_w,
        test=test_w,
        absent_classes=tuple(int(c) for c in np.nonzero(counts == 0)[0]),
        pre_oversample_counts=pre_counts,
    )
    check_no_leakage(ds)
    return ds
