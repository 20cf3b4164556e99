"""Bag-of-features summarization of a full track.

The trained sparse RBM is swept over the mel spectrogram at hop 1, the
hidden probabilities are max-pooled over fixed-length time segments, and
the pooled segments are averaged into one song-level vector.
"""

from dataclasses import dataclass

import numpy as np

from .dsp import MelSpectrogram
from .rbm import RbmModel, hidden_given_visible
from .whitening import WhiteningModel, apply_whitening


@dataclass
class ActivationMap:
    values: np.ndarray  # (positions, d_hidden), entries in [0, 1]
    frame_rate: float


@dataclass
class BagOfFeatures:
    values: np.ndarray  # (d_hidden,), entries in [0, 1]
    pool_seconds: float


def block_matrix(mel: MelSpectrogram, n_frames):
    """All hop-1 blocks of a track as rows: (frames - n_frames + 1, n_frames*128)."""
    if mel.n_frames < n_frames:
        raise ValueError("track too short")
    windows = np.lib.stride_tricks.sliding_window_view(mel.values, (n_frames, mel.values.shape[1]))
    return windows.reshape(mel.n_frames - n_frames + 1, -1)


def extract_activations(mel: MelSpectrogram, whitening: WhiteningModel, model: RbmModel, n_frames) -> ActivationMap:
    """Hidden probabilities of every whitened block at every start frame."""
    blocks = block_matrix(mel, n_frames)
    activations = hidden_given_visible(model, apply_whitening(whitening, blocks))
    return ActivationMap(values=activations, frame_rate=mel.frame_rate)


def max_pool(act: ActivationMap, pool_seconds, frame_rate=None) -> np.ndarray:
    """Per-unit max over non-overlapping segments of round(pool_seconds *
    frame_rate) positions; a trailing partial segment is kept."""
    if pool_seconds <= 0:
        raise ValueError("pool_seconds must be positive")
    rate = act.frame_rate if frame_rate is None else frame_rate
    seg = max(1, int(round(pool_seconds * rate)))
    values = act.values
    return np.stack([values[lo : lo + seg].max(axis=0) for lo in range(0, values.shape[0], seg)])


def average(pooled) -> np.ndarray:
    """Column mean over pooled segments."""
    pooled = np.asarray(pooled)
    if pooled.ndim != 2 or pooled.shape[0] < 1:
        raise ValueError("need at least one pooled segment")
    return pooled.mean(axis=0)


def compute_bof(mel, whitening, model, n_frames, pool_seconds) -> BagOfFeatures:
    act = extract_activations(mel, whitening, model, n_frames)
    return BagOfFeatures(values=average(max_pool(act, pool_seconds)), pool_seconds=pool_seconds)
