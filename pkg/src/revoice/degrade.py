"""The six distortion families and their random-parameter sampler.

Every op is a pure function: identical (input, parameters, seed) produce
bit-identical output, every op preserves the sample count exactly, and the
realized severity (SNR, clip peak, stop-band attenuation) matches the
requested parameters within tight tolerances.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.signal

from .audio import SAMPLE_RATE, AudioBuffer, resample
from .errors import ConfigurationError
from .seeding import rng as _rng


class Kind(enum.Enum):
    """Categorical identity of a distortion family."""

    QUANT_RESAMPLE = "quant_resample"
    CLIP = "clip"
    BANDLIMIT = "bandlimit"
    OVERDRIVE = "overdrive"
    NOISE = "noise"
    REVERB = "reverb"

    @classmethod
    def from_name(cls, name: str) -> "Kind":
        for k in cls:
            if k.value == name or k.name == name:
                return k
        raise ConfigurationError(f"unknown degradation kind {name!r}")


ALL_KINDS: tuple[Kind, ...] = tuple(Kind)

# Uniform sampling ranges per kind.
PARAM_RANGES: dict[Kind, dict[str, tuple[float, float]]] = {
    Kind.QUANT_RESAMPLE: {},
    Kind.CLIP: {"threshold": (0.1, 0.5)},
    Kind.BANDLIMIT: {"cutoff_hz": (2000.0, SAMPLE_RATE / 2.0)},
    Kind.OVERDRIVE: {"gain": (2.0, 10.0)},
    Kind.NOISE: {"snr_db": (-5.0, 20.0)},
    Kind.REVERB: {"rt60_s": (0.2, 1.0)},
}


@dataclass(frozen=True)
class DegradationSpec:
    """A fully parameterized, reproducible distortion recipe."""

    label: Kind
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        ranges = PARAM_RANGES[self.label]
        unknown = set(self.params) - set(ranges)
        if unknown:
            raise ConfigurationError(f"{self.label.value}: unknown params {sorted(unknown)}")
        for name, (lo, hi) in ranges.items():
            if name not in self.params:
                raise ConfigurationError(f"{self.label.value}: missing param {name!r}")
            v = self.params[name]
            if not (lo <= v <= hi):
                raise ConfigurationError(f"{self.label.value}.{name}={v} outside [{lo}, {hi}]")

    def to_record(self) -> dict:
        return {"label": self.label.value, "params": dict(self.params), "seed": self.seed}

    @classmethod
    def from_record(cls, rec: dict) -> "DegradationSpec":
        return cls(Kind.from_name(rec["label"]), dict(rec["params"]), int(rec["seed"]))


def _require_rate(buffer: AudioBuffer) -> None:
    if buffer.sample_rate != SAMPLE_RATE:
        raise ConfigurationError(f"degradations expect {SAMPLE_RATE} Hz input, got {buffer.sample_rate}")


# ---------------------------------------------------------------------------
# Ops


MU = 255.0
_QUANT_HALF_LEVELS = 127  # mid-tread 8-bit grid: zero is an exact code


def mu_law_compand(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.log1p(MU * np.abs(x)) / np.log1p(MU)


def mu_law_expand(y: np.ndarray) -> np.ndarray:
    return np.sign(y) * np.expm1(np.abs(y) * np.log1p(MU)) / MU


def mu_law_quantize(x: np.ndarray) -> np.ndarray:
    """Compand, quantize on the mid-tread 8-bit grid, expand."""
    companded = mu_law_compand(np.clip(x, -1.0, 1.0))
    levels = np.round(companded * _QUANT_HALF_LEVELS) / _QUANT_HALF_LEVELS
    return mu_law_expand(levels)


def mu_law_quantize_resample(buffer: AudioBuffer) -> AudioBuffer:
    """8-bit mu-law companding plus an 8 kHz resampling round trip."""
    _require_rate(buffer)
    quantized = mu_law_quantize(buffer.samples)
    narrow = resample(AudioBuffer(np.clip(quantized, -1, 1), SAMPLE_RATE), 8000)
    wide = resample(narrow, SAMPLE_RATE)
    y = wide.samples
    n = len(buffer)
    y = y[:n] if y.size >= n else np.pad(y, (0, n - y.size))
    return buffer.with_samples(np.clip(y, -1.0, 1.0))


def clip(buffer: AudioBuffer, threshold: float) -> AudioBuffer:
    """Hard-clip at `threshold` times the input's peak absolute amplitude."""
    _require_rate(buffer)
    lo, hi = PARAM_RANGES[Kind.CLIP]["threshold"]
    if not (lo <= threshold <= hi):
        raise ConfigurationError(f"clip threshold {threshold} outside [{lo}, {hi}]")
    peak = float(np.abs(buffer.samples).max())
    if peak == 0.0:
        return buffer.with_samples(buffer.samples.copy(), extra_flags=("clip_silent_input",))
    theta = threshold * peak
    return buffer.with_samples(np.clip(buffer.samples, -theta, theta))


def bandlimit(buffer: AudioBuffer, cutoff_hz: float) -> AudioBuffer:
    """Zero-phase low-pass: forward-backward windowed-sinc FIR, 513 taps."""
    _require_rate(buffer)
    nyq = buffer.sample_rate / 2.0
    if cutoff_hz > nyq + 1e-9:
        raise ConfigurationError(f"cutoff {cutoff_hz} Hz above Nyquist {nyq} Hz")
    lo = PARAM_RANGES[Kind.BANDLIMIT]["cutoff_hz"][0]
    if cutoff_hz < lo:
        raise ConfigurationError(f"cutoff {cutoff_hz} Hz below minimum {lo} Hz")
    if cutoff_hz >= 0.99 * nyq:
        return buffer.with_samples(buffer.samples.copy())  # all-pass limit
    n_taps = 513
    width = min(0.1 * cutoff_hz, nyq - cutoff_hz)
    atten = scipy.signal.kaiser_atten(n_taps, width / nyq)
    beta = scipy.signal.kaiser_beta(atten)
    h = scipy.signal.firwin(n_taps, cutoff_hz + width / 2.0, window=("kaiser", beta), fs=buffer.sample_rate)
    y = scipy.signal.filtfilt(h, [1.0], buffer.samples, padlen=min(len(buffer) - 1, 3 * n_taps))
    return buffer.with_samples(np.clip(y, -1.0, 1.0))


def overdrive(buffer: AudioBuffer, gain: float) -> AudioBuffer:
    """Normalized tanh waveshaping: out = tanh(gain·in) / tanh(gain)."""
    _require_rate(buffer)
    if gain <= 0:
        raise ConfigurationError(f"overdrive gain must be positive, got {gain}")
    return buffer.with_samples(np.tanh(gain * buffer.samples) / math.tanh(gain))


def white_noise(n_samples: int, seed: int) -> AudioBuffer:
    """Unit-variance white Gaussian noise (not amplitude-bounded)."""
    return AudioBuffer(_rng("white_noise", seed).standard_normal(n_samples), SAMPLE_RATE)


def _loop_noise(noise: np.ndarray, n: int, fade: int = 220) -> np.ndarray:
    """Tile a noise segment to length n with a short linear crossfade at seams."""
    out = noise.copy()
    while out.size < n:
        k = min(fade, out.size, noise.size)
        ramp = np.linspace(0.0, 1.0, k)
        seam = out[-k:] * (1.0 - ramp) + noise[:k] * ramp
        out = np.concatenate([out[:-k], seam, noise[k:]])
    return out[:n]


def add_noise(buffer: AudioBuffer, snr_db: float, noise: AudioBuffer | None = None, seed: int = 0) -> AudioBuffer:
    """Mix in noise scaled so the realized SNR equals `snr_db` exactly.

    With no `noise` given, white Gaussian noise is synthesized from `seed`.
    Shorter noise is looped with a 10 ms crossfade. If the mixture peak
    exceeds 1 the whole mixture is rescaled and a flag is set (rescaling
    changes the residual-vs-reference SNR reading).
    """
    _require_rate(buffer)
    lo, hi = PARAM_RANGES[Kind.NOISE]["snr_db"]
    if not (lo <= snr_db <= hi):
        raise ConfigurationError(f"snr_db {snr_db} outside [{lo}, {hi}]")
    n = len(buffer)
    if noise is None:
        nz = white_noise(n, seed).samples
    else:
        if noise.sample_rate != buffer.sample_rate:
            raise ConfigurationError("noise sample rate differs from signal")
        nz = noise.samples if len(noise) >= n else _loop_noise(noise.samples, n)
        nz = nz[:n]
    noise_energy = float(np.sum(nz**2))
    if noise_energy == 0.0:
        raise ConfigurationError("noise segment has zero energy")
    sig_energy = float(np.sum(buffer.samples**2))
    alpha = math.sqrt(sig_energy / noise_energy / (10.0 ** (snr_db / 10.0)))
    mix = buffer.samples + alpha * nz
    peak = float(np.abs(mix).max())
    if peak > 1.0:
        return buffer.with_samples(mix / peak, extra_flags=("noise_peak_normalized",))
    return buffer.with_samples(mix)


def synth_rir(rt60_s: float, seed: int, duration_s: float | None = None) -> AudioBuffer:
    """Exponentially decaying white-noise RIR with unit direct-path gain.

    The energy envelope decays 60 dB per `rt60_s` (Schroeder sense); the
    first sample is the direct path with amplitude exactly 1.
    """
    if not (0.05 <= rt60_s <= 1.0):
        raise ConfigurationError(f"rt60 {rt60_s} outside [0.05, 1.0] s")
    if duration_s is None:
        duration_s = min(1.0, 1.3 * rt60_s)
    n = int(round(duration_s * SAMPLE_RATE))
    tau = math.log(1000.0) / (rt60_s * SAMPLE_RATE)  # 60 dB amplitude decay rate
    e = _rng("rir", seed).standard_normal(n)
    e[0] = 1.0
    h = e * np.exp(-tau * np.arange(n))
    return AudioBuffer(h, SAMPLE_RATE)


def add_reverb(buffer: AudioBuffer, rir: AudioBuffer) -> AudioBuffer:
    """Convolve with a room impulse response, truncated to the input length."""
    _require_rate(buffer)
    if rir.sample_rate != buffer.sample_rate:
        raise ConfigurationError("RIR sample rate differs from signal")
    if len(rir) > buffer.sample_rate:
        raise ConfigurationError("RIR longer than 1 s is not supported")
    wet = scipy.signal.fftconvolve(buffer.samples, rir.samples, mode="full")[: len(buffer)]
    peak = float(np.abs(wet).max())
    if peak > 1.0:
        return buffer.with_samples(wet / peak, extra_flags=("reverb_peak_normalized",))
    return buffer.with_samples(wet)


# ---------------------------------------------------------------------------
# Sampler / dispatcher


def sample_spec(rng_seed: int, kind: Kind) -> DegradationSpec:
    """Draw parameters uniformly from the documented range for `kind`."""
    gen = _rng("degradation_spec", rng_seed, kind.value)
    params = {name: float(gen.uniform(lo, hi)) for name, (lo, hi) in PARAM_RANGES[kind].items()}
    return DegradationSpec(kind, params, seed=rng_seed)


def apply(spec: DegradationSpec, buffer: AudioBuffer) -> AudioBuffer:
    """Apply the op named by `spec.label`; output length equals input length."""
    k = spec.label
    if k is Kind.QUANT_RESAMPLE:
        return mu_law_quantize_resample(buffer)
    if k is Kind.CLIP:
        return clip(buffer, spec.params["threshold"])
    if k is Kind.BANDLIMIT:
        return bandlimit(buffer, spec.params["cutoff_hz"])
    if k is Kind.OVERDRIVE:
        return overdrive(buffer, spec.params["gain"])
    if k is Kind.NOISE:
        return add_noise(buffer, spec.params["snr_db"], seed=spec.seed)
    if k is Kind.REVERB:
        return add_reverb(buffer, synth_rir(spec.params["rt60_s"], seed=spec.seed))
    raise ConfigurationError(f"no op for kind {k}")
