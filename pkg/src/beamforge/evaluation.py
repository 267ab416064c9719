"""Online deployment and link-level evaluation.

Top-U beam prediction from network logits, zero-forcing hybrid precoders,
sum spectral efficiency, greedy beam-to-user assignment and the SNR sweep
comparing the network against genie and random beam selection.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import airmodel
from .airmodel import ChannelRealization, ScenarioConfig
from .core import SingularMatrixError, derive_stream, small_inverse
from .dataset import encode_input, noise_var_from_snr
from .neuralnet import NetworkParameters
from .training import predict_logits

log = logging.getLogger(__name__)

METHODS = ("genie", "nn", "random")
REPORT_HEADER = ["snr_db", "method", "accuracy", "spectral_efficiency", "trials"]

EVAL_NS = 0xE7A1

# trials per work unit; fixed so results never depend on the thread count
TRIAL_CHUNK = 256


@dataclass
class BeamPrediction:
    beams: np.ndarray   # U distinct 1-based indices
    order: np.ndarray   # all 1-based indices, best first


@dataclass
class PrecoderPair:
    analog: np.ndarray    # N_A x K, codeword columns
    digital: np.ndarray   # K x K, column-normalised
    gram_inverse: np.ndarray


def predict_beams(logits, n_users, use_abs=False):
    """Pick the ``n_users`` largest logits (ties go to the lower index).

    ``use_abs`` ranks by |logit| instead, the literal reading of the
    deployment step; by default raw logits are ranked since large negative
    values mean confident absence.
    """
    z = np.asarray(logits, dtype=np.float64)
    if n_users > len(z):
        raise ValueError(f"cannot select {n_users} beams out of {len(z)}")
    key = np.abs(z) if use_abs else z
    order = np.argsort(-key, kind="stable") + 1
    return BeamPrediction(order[:n_users].copy(), order)


def genie_beams(ch: ChannelRealization):
    """True LOS beam of every user, in user order (duplicates kept)."""
    return airmodel.los_beam_index(ch.los_thetas(), ch.n_antennas)


def build_precoders(beams, n_antennas) -> PrecoderPair:
    """Analog precoder from codewords, digital ZF precoder ``(W_R^H W_R)^{-1}``
    with each column scaled so the effective beam ``W_R w_B,u`` has unit norm.
    """
    beams = np.asarray(beams, dtype=np.int64)
    if len(set(beams.tolist())) != len(beams):
        raise SingularMatrixError(f"duplicate beams {beams.tolist()} give a singular Gram matrix")
    WR = np.stack([airmodel.codeword(int(b), n_antennas) for b in beams], axis=1)
    Ginv = small_inverse(WR.conj().T @ WR)
    WB = Ginv / np.linalg.norm(WR @ Ginv, axis=0)[None, :]
    return PrecoderPair(WR, WB, Ginv)


def spectral_efficiency(channels, pre: PrecoderPair, noise_var):
    """Sum rate in bits/s/Hz with equal power 1/K per stream.

    ``channels`` is a ChannelRealization or a (K, N_A) array whose row k is
    the channel of the user served by precoder column k.
    """
    if noise_var <= 0:
        raise ValueError("noise variance must be positive")
    H = np.stack([u.h for u in channels.users]) if isinstance(channels, ChannelRealization) \
        else np.atleast_2d(np.asarray(channels))
    K = pre.digital.shape[1]
    if H.shape[0] != K:
        raise ValueError(f"{H.shape[0]} users but precoder has {K} streams")
    # G[i, u] = w_B,i^H W_R^H h_u
    G = pre.digital.conj().T @ (pre.analog.conj().T @ H.T)
    P = np.abs(G) ** 2 / K
    signal = np.diag(P)
    interference = P.sum(axis=0) - signal
    return float(np.sum(np.log2(1.0 + signal / (interference + noise_var))))


def assign_beams_to_users(beams, channels):
    """Greedy max-gain matching; returns ``user[k]``, the user served by beam k.

    Repeatedly takes the unassigned (user, beam) pair with the highest
    |codeword^H h_u|^2, ties broken by lowest (user, beam) index. With fewer
    beams than users, the remaining users go unserved.
    """
    beams = np.asarray(beams, dtype=np.int64)
    H = np.stack([u.h for u in channels.users]) if isinstance(channels, ChannelRealization) \
        else np.atleast_2d(np.asarray(channels))
    n_ant = H.shape[1]
    C = np.stack([airmodel.codeword(int(b), n_ant) for b in beams], axis=1)
    gain = np.abs(H.conj() @ C) ** 2        # (users, beams)
    user = np.full(len(beams), -1, dtype=np.int64)
    live = gain.copy()
    for _ in range(min(len(beams), H.shape[0])):
        u, k = np.unravel_index(int(np.argmax(live)), live.shape)
        user[k] = u
        live[u, :] = -np.inf
        live[:, k] = -np.inf
    return user


def alignment_accuracy(pred, true_beams):
    """Fraction of distinct true LOS beams that were selected."""
    truth = set(np.asarray(true_beams).tolist())
    return len(set(np.asarray(pred).tolist()) & truth) / len(truth)


def evaluate_selection(beams, ch: ChannelRealization, noise_var):
    """Assign distinct ``beams`` to users, precode, and return the sum rate."""
    beams = np.asarray(beams, dtype=np.int64)
    user = assign_beams_to_users(beams, ch)
    served = user >= 0
    pre = build_precoders(beams[served], ch.n_antennas)
    H = np.stack([ch.users[u].h for u in user[served]])
    return spectral_efficiency(H, pre, noise_var)


@dataclass
class EvaluationRow:
    snr_db: float
    method: str
    accuracy: float
    spectral_efficiency: float
    trials: int
    per_trial_accuracy: np.ndarray = field(repr=False, default=None)
    per_trial_se: np.ndarray = field(repr=False, default=None)
    degenerate: int = 0


@dataclass
class EvaluationReport:
    rows: list[EvaluationRow]

    def row(self, snr_db, method) -> EvaluationRow:
        for r in self.rows:
            if r.method == method and np.isclose(r.snr_db, snr_db):
                return r
        raise KeyError((snr_db, method))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_HEADER)
            for r in self.rows:
                w.writerow([repr(float(r.snr_db)), r.method, repr(float(r.accuracy)),
                            repr(float(r.spectral_efficiency)), r.trials])


def _sweep_chunk(params, cfg, snr_grid, seed, trials_idx, use_abs):
    n_snr, n = len(snr_grid), len(trials_idx)
    U, NA = cfg.n_users, cfg.n_antennas
    acc = np.zeros((n_snr, 3, n))
    se = np.zeros((n_snr, 3, n))
    degenerate = np.zeros(n_snr, dtype=np.int64)
    W = airmodel.measurement_matrix(cfg)
    channels = [airmodel.sample_channel(cfg, derive_stream(seed, (EVAL_NS, int(t))))
                for t in trials_idx]
    for s, snr in enumerate(snr_grid):
        nv = float(noise_var_from_snr(snr))
        r = np.empty((n, cfg.n_measurements), dtype=np.complex128)
        rand_beams = []
        for j, t in enumerate(trials_idx):
            rng = derive_stream(seed, (EVAL_NS, int(t), s))
            r[j] = airmodel.synthesize_measurement(channels[j], W, nv, rng)
            rand_beams.append(rng.choice(NA, size=U, replace=False) + 1)
        logits = predict_logits(params, encode_input(r))
        for j, ch in enumerate(channels):
            truth = genie_beams(ch)
            genie = np.unique(truth)
            if len(genie) < U:
                degenerate[s] += 1
            picks = {"genie": genie,
                     "nn": predict_beams(logits[j], U, use_abs).beams,
                     "random": rand_beams[j]}
            for m, name in enumerate(METHODS):
                acc[s, m, j] = alignment_accuracy(picks[name], truth)
                se[s, m, j] = evaluate_selection(picks[name], ch, nv)
    return acc, se, degenerate


def snr_sweep(params: NetworkParameters, cfg: ScenarioConfig, snr_grid_db, trials, seed,
              threads=1, use_abs=False) -> EvaluationReport:
    """Average accuracy and sum rate per SNR point for nn, genie and random selection.

    Trial t draws its channel from ``derive_stream(seed, (EVAL_NS, t))``; the same
    channels are reused at every SNR point so methods and SNRs are compared
    on common random numbers.
    """
    if params.arch.input_len != 2 * cfg.n_measurements or params.arch.output_dim != cfg.n_antennas:
        raise ValueError(
            f"checkpoint expects input {params.arch.input_len} / output {params.arch.output_dim}, "
            f"scenario gives {2 * cfg.n_measurements} / {cfg.n_antennas}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    grid = [float(s) for s in snr_grid_db]
    chunks = [np.arange(i, min(i + TRIAL_CHUNK, trials)) for i in range(0, trials, TRIAL_CHUNK)]

    def work(idx):
        return _sweep_chunk(params, cfg, grid, seed, idx, use_abs)

    if threads <= 1:
        parts = [work(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, chunks))
    acc = np.concatenate([p[0] for p in parts], axis=2)
    se = np.concatenate([p[1] for p in parts], axis=2)
    degenerate = np.sum([p[2] for p in parts], axis=0)

    rows = []
    for s, snr in enumerate(grid):
        if degenerate[s]:
            log.info("snr %g dB: %d trial(s) with users sharing a LOS beam", snr, degenerate[s])
        for m, name in enumerate(METHODS):
            rows.append(EvaluationRow(snr, name, float(acc[s, m].mean()), float(se[s, m].mean()),
                                      trials, acc[s, m], se[s, m], int(degenerate[s])))
    return EvaluationReport(rows)
