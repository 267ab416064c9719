"""Measurement datasets: generation, train/validation split, input encoding,
mini-batching and the AMPB binary file format.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import airmodel
from .airmodel import ScenarioConfig
from .core import FormatError, derive_stream

DATA_MAGIC = b"AMPB"
DATA_VERSION = 1
_HEADER = struct.Struct("<4sHHHHHHQ")

# Changing this flips the network input layout everywhere.
IMAG_FIRST = True

SPLIT_STREAM = (0x5B17, 0)


@dataclass
class MeasurementRecord:
    r: np.ndarray            # complex, length M
    true_beams: np.ndarray   # U beam indices, ascending
    los_thetas: np.ndarray   # U values matching true_beams order
    snr_db: float


@dataclass
class Dataset:
    """Column-oriented record store; row i is record i."""

    cfg: ScenarioConfig
    r: np.ndarray        # (count, M) complex128
    beams: np.ndarray    # (count, U) int64, ascending per row
    thetas: np.ndarray   # (count, U) float64
    snr_db: np.ndarray   # (count,) float64

    def __post_init__(self):
        n = len(self.r)
        M, U = self.cfg.n_measurements, self.cfg.n_users
        if self.r.shape != (n, M) or self.beams.shape != (n, U) or \
                self.thetas.shape != (n, U) or self.snr_db.shape != (n,):
            raise ValueError("dataset arrays are inconsistent with the scenario dimensions")

    def __len__(self):
        return len(self.r)

    def record(self, i) -> MeasurementRecord:
        return MeasurementRecord(self.r[i].copy(), self.beams[i].copy(),
                                 self.thetas[i].copy(), float(self.snr_db[i]))

    def take(self, idx) -> Dataset:
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.cfg, self.r[idx], self.beams[idx], self.thetas[idx], self.snr_db[idx])

    def labels(self, idx=None):
        """Beam distribution vectors (count, N_A) for the selected records."""
        beams = self.beams if idx is None else self.beams[idx]
        q = np.zeros((len(beams), self.cfg.n_antennas))
        np.put_along_axis(q, beams - 1, 1.0, axis=1)
        return q


def noise_var_from_snr(snr_db):
    """SNR is 1/sigma^2 in linear scale."""
    return 10.0 ** (-np.asarray(snr_db, dtype=np.float64) / 10.0)


def generate_record(cfg: ScenarioConfig, W, snr_range_db, rng):
    """Draw one record and return ``(record, channel)``.

    Draw order: channel (see ``sample_channel``), SNR, then antenna noise.
    Stored quantities are rounded to float32 before anything is derived from
    them, so a record read back from disk is identical to the generated one
    and its labels always follow from its stored LOS directions.
    """
    ch = airmodel.sample_channel(cfg, rng)
    thetas = ch.los_thetas().astype(np.float32).astype(np.float64)
    beams = airmodel.los_beam_index(thetas, cfg.n_antennas)
    order = np.argsort(beams, kind="stable")
    lo, hi = snr_range_db
    snr = float(np.float32(rng.uniform(lo, hi)))
    r = airmodel.synthesize_measurement(ch, W, float(noise_var_from_snr(snr)), rng)
    r = r.astype(np.complex64).astype(np.complex128)
    return MeasurementRecord(r, beams[order], thetas[order], snr), ch


def generate_dataset(cfg: ScenarioConfig, count, snr_range_db=(-10.0, 10.0), master_seed=0,
                     threads=1) -> Dataset:
    """Generate ``count`` records; record i uses ``derive_stream(master_seed, i)``.

    The output does not depend on ``threads``.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    lo, hi = snr_range_db
    if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
        raise ValueError(f"invalid SNR range {snr_range_db}")
    W = airmodel.measurement_matrix(cfg)
    M, U = cfg.n_measurements, cfg.n_users
    r = np.empty((count, M), dtype=np.complex128)
    beams = np.empty((count, U), dtype=np.int64)
    thetas = np.empty((count, U))
    snr = np.empty(count)

    def work(chunk):
        for i in chunk:
            rec, _ = generate_record(cfg, W, (lo, hi), derive_stream(master_seed, i))
            r[i], beams[i], thetas[i], snr[i] = rec.r, rec.true_beams, rec.los_thetas, rec.snr_db

    chunks = np.array_split(np.arange(count), max(1, min(count, 8 * threads)))
    if threads <= 1:
        for c in chunks:
            work(c)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, chunks))
    return Dataset(cfg, r, beams, thetas, snr)


def split_train_val(ds: Dataset, seed):
    """Random 9:1 partition; |train| = round(0.9 * count)."""
    n = len(ds)
    if n < 10:
        raise ValueError(f"need at least 10 records to split, got {n}")
    perm = derive_stream(seed, SPLIT_STREAM).permutation(n)
    n_train = int(np.floor(0.9 * n + 0.5))
    return ds.take(np.sort(perm[:n_train])), ds.take(np.sort(perm[n_train:]))


def encode_input(r):
    """Real network input of length 2M: imaginary block, then real block.

    Accepts a single vector (M,) or a batch (B, M).
    """
    r = np.asarray(r)
    parts = (r.imag, r.real) if IMAG_FIRST else (r.real, r.imag)
    return np.concatenate(parts, axis=-1).astype(np.float64)


def next_minibatch(train: Dataset, rng, batch_size):
    """Sample ``batch_size`` distinct records; returns (inputs (B, 2M), labels (B, N_A))."""
    n = len(train)
    if batch_size > n:
        raise ValueError(f"batch size {batch_size} exceeds training set size {n}")
    if batch_size < 1:
        raise ValueError("batch size must be >= 1")
    idx = rng.choice(n, size=batch_size, replace=False)
    return encode_input(train.r[idx]), train.labels(idx)


# --- AMPB file -------------------------------------------------------------

def _record_dtype(M, U):
    return np.dtype([("r", "<f4", (M, 2)), ("beams", "<u2", (U,)),
                     ("thetas", "<f4", (U,)), ("snr", "<f4")])


def write_dataset(ds: Dataset, path):
    c = ds.cfg
    if c.n_antennas > 0xFFFF:
        raise ValueError("N_A does not fit the u16 header field")
    head = _HEADER.pack(DATA_MAGIC, DATA_VERSION, c.n_antennas, c.n_rf, c.n_slots,
                        c.n_users, c.n_paths, len(ds))
    rec = np.zeros(len(ds), dtype=_record_dtype(c.n_measurements, c.n_users))
    rec["r"][..., 0] = ds.r.real
    rec["r"][..., 1] = ds.r.imag
    rec["beams"] = ds.beams
    rec["thetas"] = ds.thetas
    rec["snr"] = ds.snr_db
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(rec.tobytes())


def read_dataset(path, los_gain_var=1.0, nlos_gain_var=0.01) -> Dataset:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise FormatError(f"truncated dataset header at offset {len(data)}")
    magic, version, NA, NR, J, U, L, count = _HEADER.unpack_from(data, 0)
    if magic != DATA_MAGIC:
        raise FormatError(f"bad magic {magic!r} at offset 0 (expected {DATA_MAGIC!r})")
    if version != DATA_VERSION:
        raise FormatError(f"unsupported version {version} at offset 4")
    try:
        cfg = ScenarioConfig(NA, NR, J, U, L, los_gain_var, nlos_gain_var)
    except ValueError as exc:
        raise FormatError(f"invalid scenario in header at offset 6: {exc}") from None
    dt = _record_dtype(cfg.n_measurements, U)
    need = _HEADER.size + count * dt.itemsize
    if len(data) < need:
        full = (len(data) - _HEADER.size) // dt.itemsize
        raise FormatError(f"truncated record {full} at offset {_HEADER.size + full * dt.itemsize} "
                          f"(header declares {count} records)")
    if len(data) > need:
        raise FormatError(f"{len(data) - need} trailing bytes at offset {need}")
    rec = np.frombuffer(data, dtype=dt, count=count, offset=_HEADER.size)
    r = rec["r"][..., 0].astype(np.float64) + 1j * rec["r"][..., 1].astype(np.float64)
    beams = rec["beams"].astype(np.int64)
    if count and (beams.min() < 1 or beams.max() > NA):
        raise FormatError("beam index outside 1..N_A in record block")
    return Dataset(cfg, r, beams, rec["thetas"].astype(np.float64),
                   rec["snr"].astype(np.float64))
