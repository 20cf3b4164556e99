"""Spectral-block sampling: cut training examples out of mel spectrograms.

A block is n_frames consecutive mel frames flattened row-major into one
vector. One block is drawn per second of audio, either at a uniformly
random position within that second or at the frame where the onset
detection function peaks.
"""

from dataclasses import dataclass

import numpy as np

from .dsp import MelSpectrogram, OnsetFunction

VALID_BLOCK_FRAMES = (2, 4, 6, 8, 10)


@dataclass
class SpectralBlock:
    data: np.ndarray  # length n_frames * 128
    source_frame: int


@dataclass
class SamplingPolicy:
    mode: str = "onset"  # "random" | "onset"
    blocks_per_second: float = 1.0
    n_frames: int = 8

    def __post_init__(self):
        if self.mode not in ("random", "onset"):
            raise ValueError(f"unknown sampling mode {self.mode!r}")
        if self.blocks_per_second <= 0:
            raise ValueError("blocks_per_second must be positive")
        if self.n_frames not in VALID_BLOCK_FRAMES:
            raise ValueError(f"n_frames must be one of {VALID_BLOCK_FRAMES}")


def _span_edges(n_frames_total, frame_rate, blocks_per_second):
    """Frame-index edges of consecutive sampling spans (one per block)."""
    span = frame_rate / blocks_per_second
    n_spans = int(np.ceil(n_frames_total / span - 1e-9))
    edges = [min(int(np.floor(s * span)), n_frames_total) for s in range(n_spans)]
    edges.append(n_frames_total)
    return edges


def _cut(mel: MelSpectrogram, start, n_frames):
    return SpectralBlock(data=mel.values[start : start + n_frames].ravel(), source_frame=start)


def sample_random(mel: MelSpectrogram, policy: SamplingPolicy, seed) -> list:
    """One block per span, start uniform within the span, shifted left when
    the block would overrun the clip. Deterministic given the seed."""
    total = mel.n_frames
    if total < policy.n_frames:
        return []
    rng = np.random.default_rng(seed)
    last_start = total - policy.n_frames
    blocks = []
    edges = _span_edges(total, mel.frame_rate, policy.blocks_per_second)
    for lo, hi in zip(edges[:-1], edges[1:]):
        start = int(rng.integers(lo, hi))
        blocks.append(_cut(mel, min(start, last_start), policy.n_frames))
    return blocks


def sample_onset(mel: MelSpectrogram, odf: OnsetFunction, policy: SamplingPolicy) -> list:
    """One block per span, starting at the span's onset-strength argmax
    (ties break to the earliest frame), shifted left to fit the clip."""
    total = mel.n_frames
    if len(odf) != total:
        raise ValueError("onset function not aligned with mel spectrogram")
    if total < policy.n_frames:
        return []
    last_start = total - policy.n_frames
    blocks = []
    edges = _span_edges(total, mel.frame_rate, policy.blocks_per_second)
    for lo, hi in zip(edges[:-1], edges[1:]):
        start = lo + int(np.argmax(odf.strength[lo:hi]))
        blocks.append(_cut(mel, min(start, last_start), policy.n_frames))
    return blocks


def sample_clip(mel, odf, policy, seed):
    if policy.mode == "onset":
        return sample_onset(mel, odf, policy)
    return sample_random(mel, policy, seed)


def build_training_set(corpus, policy: SamplingPolicy, target_count, seed) -> np.ndarray:
    """Collect up to `target_count` block vectors round-robin over clips.

    `corpus` is a sequence of (MelSpectrogram, OnsetFunction) pairs. Each
    clip's random stream is seeded by (seed, clip index), so per-clip
    sampling is order-independent and parallel-safe. Returns a matrix with
    one block per row; stops early if the corpus runs out of blocks.
    """
    if not corpus:
        raise ValueError("empty training set")
    if target_count <= 0:
        raise ValueError("target_count must be positive")

    per_clip = [sample_clip(mel, odf, policy, (seed, i)) for i, (mel, odf) in enumerate(corpus)]
    rows = []
    depth = 0
    while len(rows) < target_count:
        took_any = False
        for blocks in per_clip:
            if depth < len(blocks):
                rows.append(blocks[depth].data)
                took_any = True
                if len(rows) == target_count:
                    break
        if not took_any:
            break
        depth += 1
    if not rows:
        raise ValueError("empty training set")
    return np.asarray(rows)
