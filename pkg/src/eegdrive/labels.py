"""Rule-based command classification and multi-horizon label assignment.

A joystick reading (v_x, omega_z) maps to one command through a dead-band
rule with threshold tau: an axis is active only when its magnitude exceeds
tau, and a reading with both axes active is contradictory and yields no
label. Values exactly at tau fall inside the dead band.

``label_at_horizon`` shifts each EEG timestamp forward by the horizon delta,
finds the nearest joystick reading to the shifted target, and classifies it.
Samples whose target has no joystick reading within the alignment gap, or
whose reading is contradictory, are omitted.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .ingest import AlignmentConfig, align_nearest
from .session import NS_PER_MS, CommandLabel, JoystickStream

#: Code used in bulk arrays for "no label" (contradictory or unmatched).
NO_LABEL = -1


@dataclass(frozen=True)
class LabelRule:
    """Dead-band threshold for both joystick axes."""

    tau: float = 0.1

    def __post_init__(self):
        if not (0.0 < self.tau < 1.0):
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")


def classify_command(v_x: float, omega_z: float, rule: LabelRule) -> CommandLabel | None:
    """Classify one joystick reading; None means contradictory (discard)."""
    tau = rule.tau
    v_in = abs(v_x) <= tau
    w_in = abs(omega_z) <= tau
    if v_in and w_in:
        return CommandLabel.STOP
    if w_in and v_x > tau:
        return CommandLabel.FORWARD
    if w_in and v_x < -tau:
        return CommandLabel.REVERSE
    if v_in and omega_z > tau:
        return CommandLabel.LEFT
    if v_in and omega_z < -tau:
        return CommandLabel.RIGHT
    return None  # both axes active at once


def classify_commands(v_x: np.ndarray, omega_z: np.ndarray, rule: LabelRule) -> np.ndarray:
    """Vectorised ``classify_command``; returns int8 codes with NO_LABEL for discards."""
    v_x = np.asarray(v_x, dtype=np.float64)
    omega_z = np.asarray(omega_z, dtype=np.float64)
    tau = rule.tau
    v_in = np.abs(v_x) <= tau
    w_in = np.abs(omega_z) <= tau
    out = np.full(v_x.shape, NO_LABEL, dtype=np.int8)
    out[v_in & w_in] = CommandLabel.STOP
    out[w_in & (v_x > tau)] = CommandLabel.FORWARD
    out[w_in & (v_x < -tau)] = CommandLabel.REVERSE
    out[v_in & (omega_z > tau)] = CommandLabel.LEFT
    out[v_in & (omega_z < -tau)] = CommandLabel.RIGHT
    return out


@dataclass(frozen=True)
class LabeledSample:
    """One labelled EEG sample under a specific horizon."""

    t_ns: int
    label: CommandLabel
    delta_ms: int
    index: int  # sample column in the source recording


@dataclass
class LabeledSamples:
    """All labelled samples of one recording under one horizon, time-ordered.

    Column-oriented for the splitting stage: ``indices`` are sample columns
    into the source recording, ``t_ns`` the matching timestamps, ``labels``
    the command codes.
    """

    delta_ms: int
    indices: np.ndarray
    t_ns: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.t_ns = np.asarray(self.t_ns, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int8)
        if not (len(self.indices) == len(self.t_ns) == len(self.labels)):
            raise ValueError("labelled-sample columns must share one length")

    def __len__(self) -> int:
        return len(self.indices)

    def __getitem__(self, i: int) -> LabeledSample:
        return LabeledSample(
            int(self.t_ns[i]), CommandLabel(int(self.labels[i])),
            self.delta_ms, int(self.indices[i]),
        )

    def class_counts(self, n_classes: int = len(CommandLabel)) -> np.ndarray:
        return np.bincount(self.labels, minlength=n_classes)


def label_at_horizon(
    eeg_ts: np.ndarray,
    joystick: JoystickStream,
    rule: LabelRule,
    delta_ms: int,
    align_cfg: AlignmentConfig | None = None,
) -> LabeledSamples:
    """Assign Label(t) = command(joystick nearest to t + delta).

    Returns only the samples that received a label: unmatched targets and
    contradictory readings are dropped.
    """
    if align_cfg is None:
        align_cfg = AlignmentConfig()
    eeg_ts = np.asarray(eeg_ts, dtype=np.int64)
    targets = eeg_ts + delta_ms * NS_PER_MS
    match = align_nearest(targets, joystick.t_ns, align_cfg)
    matched = match >= 0
    codes = np.full(len(eeg_ts), NO_LABEL, dtype=np.int8)
    codes[matched] = classify_commands(
        joystick.v_x[match[matched]], joystick.omega_z[match[matched]], rule
    )
    keep = codes != NO_LABEL
    idx = np.nonzero(keep)[0]
    return LabeledSamples(
        delta_ms=int(delta_ms),
        indices=idx,
        t_ns=eeg_ts[idx],
        labels=codes[idx],
    )


def write_labels_csv(path: str | Path, labeled: LabeledSamples) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write("t_ns,label_code\n")
        for t, code in zip(labeled.t_ns.tolist(), labeled.labels.tolist()):
            fh.write(f"{t},{code}\n")
    return path


def read_labels_csv(path: str | Path, delta_ms: int, eeg_ts: np.ndarray) -> LabeledSamples:
    """Load a labels file back, recovering sample indices from timestamps."""
    path = Path(path)
    t_list: list[int] = []
    code_list: list[int] = []
    with path.open("r", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["t_ns", "label_code"]:
            raise DataError(f"{path}:1: expected header t_ns,label_code")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                t_list.append(int(row[0]))
                code_list.append(int(row[1]))
            except (IndexError, ValueError) as e:
                raise DataError(f"{path}:{lineno}: {e}") from e
    eeg_ts = np.asarray(eeg_ts, dtype=np.int64)
    t_arr = np.asarray(t_list, dtype=np.int64)
    pos = np.searchsorted(eeg_ts, t_arr)
    bad = (pos >= len(eeg_ts)) | (eeg_ts[np.minimum(pos, len(eeg_ts) - 1)] != t_arr)
    if np.any(bad):
        i = int(np.nonzero(bad)[0][0])
        raise DataError(
            f"{path}: label timestamp {t_arr[i]} not present in the recording"
        )
    codes = np.asarray(code_list, dtype=np.int8)
    if len(codes) and (codes.min() < 0 or codes.max() >= len(CommandLabel)):
        raise DataError(f"{path}: label codes must lie in [0, {len(CommandLabel) - 1}]")
    return LabeledSamples(delta_ms=delta_ms, indices=pos, t_ns=t_arr, labels=codes)
