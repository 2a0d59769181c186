"""Sensor series ingestion, sliding windows, splits and a synthetic multi-domain generator."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


class DataError(ValueError):
    pass


@dataclass
class SensorSeries:
    values: np.ndarray  # (timesteps, channels)
    labels: np.ndarray  # (timesteps,)
    domain_id: int
    sample_rate_hz: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.values.ndim != 2 or len(self.labels) != len(self.values):
            raise DataError(
                f"series values {self.values.shape} and labels {self.labels.shape} disagree"
            )


@dataclass(frozen=True)
class SensorWindow:
    x: np.ndarray  # (channels, 1, window_len)
    y: int
    domain_id: int


class DomainDataset:
    """Windows of one domain stored as arrays ``X`` (N, channels, 1, L) and ``y`` (N,).

    Every read through :meth:`arrays` bumps ``access_count``; the training
    code reads data only through it, so a held-out domain can be audited.
    """

    def __init__(self, domain_id: int, X: np.ndarray, y: np.ndarray):
        self.domain_id = int(domain_id)
        self._X = np.asarray(X, dtype=np.float64)
        self._y = np.asarray(y, dtype=np.int64)
        self._X.setflags(write=False)
        self._y.setflags(write=False)
        if self._X.ndim != 4 or len(self._X) != len(self._y):
            raise DataError(f"domain {domain_id}: X shape {self._X.shape} vs y shape {self._y.shape}")
        self.access_count = 0

    @classmethod
    def from_windows(cls, windows: list[SensorWindow], domain_id: int | None = None) -> DomainDataset:
        if not windows:
            raise DataError("no windows")
        dom = windows[0].domain_id if domain_id is None else domain_id
        return cls(dom, np.stack([w.x for w in windows]), np.array([w.y for w in windows]))

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        self.access_count += 1
        return self._X, self._y

    def subset(self, index) -> DomainDataset:
        X, y = self.arrays()
        return DomainDataset(self.domain_id, X[index], y[index])

    def __len__(self) -> int:
        return len(self._y)

    @property
    def window_shape(self) -> tuple[int, ...]:
        return self._X.shape[1:]

    def __repr__(self) -> str:
        return f"DomainDataset(domain={self.domain_id}, windows={len(self)})"


# -- windowing ----------------------------------------------------------------


def window_stride(window_len: int, overlap: float) -> int:
    return max(1, int(round(window_len * (1.0 - overlap))))


def window_count(timesteps: int, window_len: int, overlap: float = 0.5) -> int:
    if window_len > timesteps:
        return 0
    return (timesteps - window_len) // window_stride(window_len, overlap) + 1


def sliding_windows(series: SensorSeries, window_len: int, overlap: float = 0.5) -> list[SensorWindow]:
    """Fixed-length windows; windows spanning a label change are dropped."""
    if not 0 <= overlap < 1:
        raise DataError(f"overlap must lie in [0, 1), got {overlap}")
    if window_len < 1:
        raise DataError(f"window_len must be positive, got {window_len}")
    T = len(series.values)
    if window_len > T:
        log.warning("window_len %d exceeds series length %d; no windows", window_len, T)
        return []
    stride = window_stride(window_len, overlap)
    out = []
    for k in range(window_count(T, window_len, overlap)):
        s = k * stride
        lab = series.labels[s : s + window_len]
        if np.any(lab != lab[0]):
            continue
        x = series.values[s : s + window_len].T[:, None, :].copy()
        out.append(SensorWindow(x, int(lab[0]), series.domain_id))
    return out


# -- csv ------------------------------------------------------------------------


def load_domain_csv(path) -> SensorSeries:
    """Read ``domain,label,ch0,ch1,...`` rows, one per timestep."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if header[:2] != ["domain", "label"] or len(header) < 3:
            raise DataError(f"{path}: header must start with domain,label,ch0,... got {header}")
        n_ch = len(header) - 2
        domains, labels, values = set(), [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != n_ch + 2:
                raise DataError(f"{path}: line {lineno}: expected {n_ch + 2} fields, got {len(row)}")
            try:
                domains.add(int(row[0]))
                labels.append(int(row[1]))
            except ValueError:
                raise DataError(f"{path}: line {lineno}: domain and label must be integers") from None
            try:
                values.append([float(v) for v in row[2:]])
            except ValueError:
                raise DataError(f"{path}: line {lineno}: nonnumeric channel value") from None
    if len(domains) > 1:
        raise DataError(f"{path}: mixed domain ids {sorted(domains)} in one file")
    if not labels:
        raise DataError(f"{path}: no data rows")
    if min(labels) < 0:
        raise DataError(f"{path}: negative class label")
    return SensorSeries(np.array(values, dtype=np.float64), np.array(labels), domains.pop())


def write_domain_csv(series: SensorSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["domain", "label"] + [f"ch{i}" for i in range(series.values.shape[1])])
        for lab, row in zip(series.labels, series.values):
            w.writerow([series.domain_id, int(lab)] + [repr(float(v)) for v in row])


# -- splitting ----------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0
    stratified: bool = True


def split_indices(y: np.ndarray, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    if not 0 < spec.train_fraction < 1:
        raise DataError(f"train_fraction must lie in (0, 1), got {spec.train_fraction}")
    y = np.asarray(y)
    rng = np.random.Generator(np.random.Philox(spec.seed))
    if not spec.stratified:
        perm = rng.permutation(len(y))
        n_tr = int(round(spec.train_fraction * len(y)))
        return np.sort(perm[:n_tr]), np.sort(perm[n_tr:])
    train, val = [], []
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        idx = idx[rng.permutation(len(idx))]
        if len(idx) == 1:
            log.warning("class %d has a single window; assigning it to the training split", c)
            train.append(idx)
            continue
        n_tr = min(len(idx) - 1, max(1, int(round(spec.train_fraction * len(idx)))))
        train.append(idx[:n_tr])
        val.append(idx[n_tr:])
    train = np.sort(np.concatenate(train)) if train else np.zeros(0, dtype=np.int64)
    val = np.sort(np.concatenate(val)) if val else np.zeros(0, dtype=np.int64)
    return train, val


def train_val_split(dataset: DomainDataset, spec: SplitSpec) -> tuple[DomainDataset, DomainDataset]:
    _, y = dataset.arrays()
    tr, va = split_indices(y, spec)
    return dataset.subset(tr), dataset.subset(va)


# -- synthetic generator ----------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    """Multi-domain sinusoid-plus-offset generator.

    Class ``c`` has base waveform ``offset_c + sin(2 pi f_c t / L + phase)``
    scaled by ``separation`` (so separation 0 makes class means coincide).
    Each domain draws an amplitude scale, a constant offset and a noise scale;
    noise for class ``c`` is further multiplied by ``sigma_multipliers[c]``.
    """

    num_domains: int = 4
    num_classes: int = 2
    channels: int = 3
    window_len: int = 32
    windows_per_class: int = 60
    separation: float = 1.0
    noise: float = 0.5
    sigma_multipliers: tuple[float, ...] = (1.0, 1.0)
    amplitude_jitter: float = 0.3
    domain_offset: float = 0.5
    domain_noise_jitter: float = 0.3
    phase_jitter: float = 0.5

    def validate(self) -> None:
        if self.num_domains < 1 or self.num_classes < 2 or self.channels < 1 or self.window_len < 2:
            raise DataError(f"invalid synthetic spec {self}")
        if self.windows_per_class < 1:
            raise DataError("windows_per_class must be positive")
        if len(self.sigma_multipliers) != self.num_classes:
            raise DataError(
                f"sigma_multipliers has {len(self.sigma_multipliers)} entries for {self.num_classes} classes"
            )
        if min(self.sigma_multipliers) <= 0 or self.noise <= 0:
            raise DataError("noise scales must be positive")
        if self.separation < 0:
            raise DataError("separation must be nonnegative")
        if min(self.amplitude_jitter, self.domain_offset, self.domain_noise_jitter, self.phase_jitter) < 0:
            raise DataError("jitter parameters must be nonnegative")


def class_waveform(c: int, channels: int, window_len: int, phase=0.0) -> np.ndarray:
    """Noise-free base waveform of class ``c``, shape (..., channels, window_len)."""
    t = np.arange(window_len)
    freq = 1.0 + c
    offset = (-1.0) ** c * (0.5 + 0.25 * (c // 2))
    ch_phase = np.arange(channels)[:, None] * (np.pi / max(channels, 1))
    phase = np.asarray(phase, dtype=np.float64)[..., None, None]
    return offset + np.sin(2 * np.pi * freq * t / window_len + ch_phase + phase)


def generate_synthetic(spec: SyntheticSpec, seed: int) -> list[DomainDataset]:
    spec.validate()
    rng = np.random.Generator(np.random.Philox(seed))
    C, L, ch, n = spec.num_classes, spec.window_len, spec.channels, spec.windows_per_class
    out = []
    for d in range(spec.num_domains):
        amp = 1.0 + spec.amplitude_jitter * rng.uniform(-1, 1, size=C)
        shift = spec.domain_offset * rng.uniform(-1, 1, size=ch)
        dnoise = 1.0 + spec.domain_noise_jitter * rng.uniform(-1, 1)
        Xs, ys = [], []
        for c in range(C):
            phase = spec.phase_jitter * rng.uniform(-np.pi, np.pi, size=n)
            base = class_waveform(c, ch, L, phase) * (spec.separation * amp[c])
            sigma = spec.noise * spec.sigma_multipliers[c] * dnoise
            x = base + shift[:, None] + sigma * rng.standard_normal((n, ch, L))
            Xs.append(x[:, :, None, :])
            ys.append(np.full(n, c))
        out.append(DomainDataset(d, np.concatenate(Xs), np.concatenate(ys)))
    return out


def synthetic_series(spec: SyntheticSpec, seed: int, segments_per_class: int = 2) -> list[SensorSeries]:
    """Continuous per-domain streams built by concatenating synthetic windows
    back to back in label-homogeneous segments; useful for CSV round trips."""
    domains = generate_synthetic(spec, seed)
    series = []
    for ds in domains:
        X, y = ds.arrays()
        chunks, labels = [], []
        for c in range(spec.num_classes):
            idx = np.flatnonzero(y == c)
            for part in np.array_split(idx, segments_per_class):
                if len(part) == 0:
                    continue
                chunks.append(np.concatenate([X[i, :, 0, :].T for i in part]))
                labels.append(np.full(len(part) * spec.window_len, c))
        series.append(SensorSeries(np.concatenate(chunks), np.concatenate(labels), ds.domain_id))
    return series


def group_by_class(datasets: list[DomainDataset]) -> dict[tuple[int, int], np.ndarray]:
    groups = {}
    for ds in datasets:
        X, y = ds.arrays()
        for c in np.unique(y):
            groups[(ds.domain_id, int(c))] = X[y == c]
    return groups


def steps_per_epoch(train_sizes: list[int], batch_per_domain: int) -> int:
    return max(1, math.ceil(max(train_sizes) / batch_per_domain))
