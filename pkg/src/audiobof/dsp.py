"""Audio frontend: STFT, per-band gain control, mel mapping, log
compression, and the onset detection function.

All functions here are pure and deterministic. The pipeline standard is
22.05 kHz input, a 1024-sample Hann window (the 46 ms window rounded to a
power of two) with 50% hop, 513 magnitude bins, and 128 mel bins.
"""

from dataclasses import dataclass

import numpy as np
from scipy import signal

SAMPLE_RATE = 22050
WINDOW_SIZE = 1024
HOP_SIZE = 512
N_FFT_BINS = WINDOW_SIZE // 2 + 1  # 513
N_MEL_BINS = 128
DEFAULT_COMPRESSION = 10.0

# automatic gain control
AGC_N_BANDS = 10
AGC_TIME_CONSTANT = 0.5  # seconds
AGC_ENVELOPE_FLOOR = 1e-8

ONSET_N_BANDS = 40


@dataclass
class AudioClip:
    """Mono PCM samples plus their sample rate."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.samples.ndim != 1:
            raise ValueError("samples must be 1-D (mono)")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples must be finite")

    @property
    def duration(self):
        return len(self.samples) / self.sample_rate


@dataclass
class Spectrogram:
    """frames x 513 nonnegative magnitudes at `frame_rate` frames/sec."""

    magnitudes: np.ndarray
    frame_rate: float

    @property
    def n_frames(self):
        return self.magnitudes.shape[0]


@dataclass
class MelSpectrogram:
    """frames x 128 log-compressed mel magnitudes."""

    values: np.ndarray
    frame_rate: float
    compression: float = DEFAULT_COMPRESSION

    @property
    def n_frames(self):
        return self.values.shape[0]


@dataclass
class OnsetFunction:
    """Per-frame onset strength, aligned 1:1 with the mel spectrogram."""

    strength: np.ndarray

    def __len__(self):
        return len(self.strength)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_filters, n_bins=N_FFT_BINS, sample_rate=SAMPLE_RATE):
    """Triangular filters with centers uniform on the mel scale over
    [0, sr/2], each normalized to unit area (row sum = 1) so a flat
    spectrum maps to a flat response.

    Returns an (n_filters, n_bins) matrix.
    """
    nyquist = sample_rate / 2.0
    bin_freqs = np.linspace(0.0, nyquist, n_bins)
    edges = mel_to_hz(np.linspace(hz_to_mel(0.0), hz_to_mel(nyquist), n_filters + 2))

    bank = np.zeros((n_filters, n_bins))
    for m in range(n_filters):
        lo, center, hi = edges[m], edges[m + 1], edges[m + 2]
        rising = (bin_freqs - lo) / (center - lo)
        falling = (hi - bin_freqs) / (hi - center)
        bank[m] = np.clip(np.minimum(rising, falling), 0.0, None)

    sums = bank.sum(axis=1)
    if np.any(sums <= 0):
        raise ValueError("mel filter with empty support; too many filters for FFT size")
    return bank / sums[:, None]


def stft(clip: AudioClip) -> Spectrogram:
    """Magnitude spectrogram: 1024-sample Hann window, hop 512, no padding.

    Frame count is floor((N - 1024)/512) + 1; clips shorter than one
    window are rejected.
    """
    x = clip.samples
    if len(x) < WINDOW_SIZE:
        raise ValueError("clip too short")
    n_frames = (len(x) - WINDOW_SIZE) // HOP_SIZE + 1
    window = signal.get_window("hann", WINDOW_SIZE, fftbins=True)

    frames = np.lib.stride_tricks.sliding_window_view(x, WINDOW_SIZE)[::HOP_SIZE][:n_frames]
    mags = np.abs(np.fft.rfft(frames * window, axis=1))
    return Spectrogram(magnitudes=mags, frame_rate=clip.sample_rate / HOP_SIZE)


def _agc_bands(n_bins=N_FFT_BINS, sample_rate=SAMPLE_RATE, n_bands=AGC_N_BANDS):
    """Overlapping triangular bands, log-spaced in frequency.

    Returns (analysis, synthesis): `analysis` rows sum to 1 (band energy =
    weighted mean of bin energies); `synthesis` columns sum to 1 so band
    envelopes interpolate back to a per-bin envelope exactly.
    """
    nyquist = sample_rate / 2.0
    bin_freqs = np.linspace(0.0, nyquist, n_bins)
    f_lo = sample_rate / WINDOW_SIZE  # first nonzero bin
    edges = np.geomspace(f_lo, nyquist, n_bands + 2)

    bank = np.zeros((n_bands, n_bins))
    for b in range(n_bands):
        lo, center, hi = edges[b], edges[b + 1], edges[b + 2]
        rising = (bin_freqs - lo) / (center - lo)
        falling = (hi - bin_freqs) / (hi - center)
        bank[b] = np.clip(np.minimum(rising, falling), 0.0, None)

    # bins outside the triangle span (DC, Nyquist) attach to the edge bands
    col = bank.sum(axis=0)
    bank[0, bin_freqs <= edges[0]] = 1.0
    bank[-1, (col <= 0) & (bin_freqs >= edges[-2])] = 1.0
    col = bank.sum(axis=0)
    if np.any(col <= 0):
        raise ValueError("AGC band construction left uncovered bins")

    analysis = bank / bank.sum(axis=1)[:, None]
    synthesis = bank / col
    return analysis, synthesis


def agc(spec: Spectrogram) -> Spectrogram:
    """Time-frequency automatic gain control.

    Band energies over 10 log-spaced sub-bands are smoothed along time
    with a first-order recursive filter (0.5 s time constant, envelope
    initialized to the first frame), interpolated back across frequency,
    and each magnitude is divided by the square root of its local
    envelope. Output level is therefore invariant to global input gain
    once the smoother settles.
    """
    analysis, synthesis = _agc_bands(spec.magnitudes.shape[1])
    energy = spec.magnitudes**2
    band_energy = energy @ analysis.T

    alpha = np.exp(-1.0 / (AGC_TIME_CONSTANT * spec.frame_rate))
    # y[t] = alpha*y[t-1] + (1-alpha)*x[t], seeded so y[0] = x[0]
    zi = alpha * band_energy[:1]
    envelope, _ = signal.lfilter([1.0 - alpha], [1.0, -alpha], band_energy, axis=0, zi=zi)
    envelope = np.maximum(envelope, AGC_ENVELOPE_FLOOR)

    bin_envelope = envelope @ synthesis
    out = spec.magnitudes / np.sqrt(np.maximum(bin_envelope, AGC_ENVELOPE_FLOOR))
    return Spectrogram(magnitudes=out, frame_rate=spec.frame_rate)


_MEL_BANK_CACHE = {}


def _mel_bank(n_filters, n_bins):
    key = (n_filters, n_bins)
    if key not in _MEL_BANK_CACHE:
        _MEL_BANK_CACHE[key] = mel_filterbank(n_filters, n_bins)
    return _MEL_BANK_CACHE[key]


def mel_map(spec: Spectrogram) -> np.ndarray:
    """Map 513 linear bins to 128 mel bins. Returns a frames x 128 matrix."""
    if spec.magnitudes.shape[1] != N_FFT_BINS:
        raise ValueError(f"expected {N_FFT_BINS} bins, got {spec.magnitudes.shape[1]}")
    return spec.magnitudes @ _mel_bank(N_MEL_BINS, N_FFT_BINS).T


def log_compress(values, compression=DEFAULT_COMPRESSION, frame_rate=None) -> MelSpectrogram:
    """Elementwise log10(1 + C*x). Monotone; zero maps to zero."""
    values = np.asarray(values, dtype=np.float64)
    if compression <= 0:
        raise ValueError("compression strength must be positive")
    if np.any(values < 0):
        raise ValueError("negative magnitude")
    out = np.log10(1.0 + compression * values)
    return MelSpectrogram(values=out, frame_rate=frame_rate, compression=compression)


def onset_function(spec: Spectrogram) -> OnsetFunction:
    """Half-wave rectified spectral flux summed over 40 mel-spaced bands.

    strength[0] is 0; strength[t] = sum_b max(0, E_b[t] - E_b[t-1]).
    """
    bank = _mel_bank(ONSET_N_BANDS, spec.magnitudes.shape[1])
    band_energy = (spec.magnitudes**2) @ bank.T
    flux = np.clip(np.diff(band_energy, axis=0), 0.0, None).sum(axis=1)
    return OnsetFunction(strength=np.concatenate([[0.0], flux]))


def melspectrogram(clip: AudioClip, compression=DEFAULT_COMPRESSION, apply_agc=True):
    """Full frontend for one clip: (MelSpectrogram, OnsetFunction).

    The onset function is computed from the gain-controlled spectrogram on
    a separate path, so both outputs share frame alignment.
    """
    spec = stft(clip)
    if apply_agc:
        spec = agc(spec)
    mel = log_compress(mel_map(spec), compression, frame_rate=spec.frame_rate)
    return mel, onset_function(spec)
