"""WAV ingestion: PCM decoding, stereo folddown, polyphase resampling."""

from fractions import Fraction

import numpy as np
from scipy import signal
from scipy.io import wavfile

from .dsp import SAMPLE_RATE, AudioClip

_PCM_SCALE = {
    np.dtype(np.int16): 32768.0,
    np.dtype(np.int32): 2147483648.0,
}


def load_wav(path, target_rate=SAMPLE_RATE) -> AudioClip:
    """Read an uncompressed PCM WAV file as a mono clip at `target_rate`.

    Stereo is averaged to mono; integer PCM is scaled to [-1, 1); other
    sample rates go through a linear-phase polyphase resampler.
    """
    rate, data = wavfile.read(path)
    if data.dtype in _PCM_SCALE:
        samples = data.astype(np.float64) / _PCM_SCALE[data.dtype]
    elif data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    else:
        samples = data.astype(np.float64)
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    if rate != target_rate:
        ratio = Fraction(target_rate, rate)
        samples = signal.resample_poly(samples, ratio.numerator, ratio.denominator)
    return AudioClip(samples=samples, sample_rate=target_rate)


def save_wav(path, samples, sample_rate=SAMPLE_RATE):
    """Write float samples in [-1, 1] as 16-bit PCM."""
    clipped = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    wavfile.write(path, sample_rate, (clipped * 32767.0).astype(np.int16))
