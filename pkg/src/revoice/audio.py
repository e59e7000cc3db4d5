"""Waveform and spectral primitives plus the objective metrics.

All processing is mono float64 at a fixed 22 050 Hz rate; `load_wav`
downmixes and resamples on ingestion. The same STFT/mel analysis feeds the
encoders, the denoiser, and the MCD/SSIM/SNR metrics so that every part of
the pipeline sees identical features.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.signal

from .errors import ConfigurationError, MismatchError, SignalTooShortError
from .seeding import rng as _rng

SAMPLE_RATE = 22050

# Analysis defaults: 46.4 ms frames / 11.6 ms hop at 22.05 kHz.
N_FFT = 1024
HOP = 256
N_MELS = 80
FMIN = 0.0
FMAX = SAMPLE_RATE / 2
FLOOR_DB = -80.0
_ABS_FLOOR_POWER = 1e-10  # power floor for pure silence, -100 dB

SNR_CLAMP_DB = 100.0
MCD_COEFFS = 13


# ---------------------------------------------------------------------------
# Domain types


@dataclass(frozen=True)
class AudioBuffer:
    """Mono waveform with its sample rate.

    `flags` records non-fatal events raised by processing ops (e.g. peak
    normalization after noise mixing); it never affects equality of the
    audio content itself.
    """

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ConfigurationError(f"AudioBuffer expects 1-D samples, got shape {samples.shape}")
        if samples.size == 0:
            raise SignalTooShortError("AudioBuffer may not be empty")
        if not np.all(np.isfinite(samples)):
            raise ConfigurationError("AudioBuffer samples must be finite")
        if self.sample_rate <= 0:
            raise ConfigurationError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def with_samples(self, samples: np.ndarray, extra_flags: tuple[str, ...] = ()) -> "AudioBuffer":
        return AudioBuffer(samples, self.sample_rate, self.flags + extra_flags)


@dataclass(frozen=True)
class MelSpec:
    """Log-mel spectrogram (dB) with the analysis config that produced it."""

    frames: np.ndarray  # (n_mels, T)
    sample_rate: int = SAMPLE_RATE
    hop: int = HOP
    n_fft: int = N_FFT
    fmin: float = FMIN
    fmax: float = FMAX
    floor_db: float = FLOOR_DB

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[1] < 1:
            raise ConfigurationError(f"MelSpec expects (n_mels, T>=1), got shape {frames.shape}")
        if not np.all(np.isfinite(frames)):
            raise ConfigurationError("MelSpec entries must be finite")
        object.__setattr__(self, "frames", frames)

    @property
    def n_mels(self) -> int:
        return self.frames.shape[0]

    @property
    def n_frames(self) -> int:
        return self.frames.shape[1]

    def same_config(self, other: "MelSpec") -> bool:
        return (
            self.sample_rate == other.sample_rate
            and self.hop == other.hop
            and self.n_fft == other.n_fft
            and self.n_mels == other.n_mels
            and math.isclose(self.fmin, other.fmin)
            and math.isclose(self.fmax, other.fmax)
        )


@dataclass(frozen=True)
class MetricReport:
    """Objective comparison of an estimate against a reference signal."""

    mcd_db: float
    ssim: float
    snr_db: float
    extra: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        rec = {"mcd_db": self.mcd_db, "ssim": self.ssim, "snr_db": self.snr_db}
        rec.update(self.extra)
        return rec

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)


# ---------------------------------------------------------------------------
# WAV I/O (RIFF, 16-bit PCM and 32-bit float; optional config-hash chunk)

_HASH_CHUNK_ID = b"cfgh"


def save_wav(path, buffer: AudioBuffer, fmt: str = "pcm16", config_hash: str | None = None) -> None:
    """Write a mono WAV file, optionally embedding a config-hash chunk."""
    x = np.clip(buffer.samples, -1.0, 1.0)
    if fmt == "pcm16":
        data = (np.round(x * 32767.0).astype("<i2")).tobytes()
        audio_format, bits = 1, 16
    elif fmt == "float32":
        data = x.astype("<f4").tobytes()
        audio_format, bits = 3, 32
    else:
        raise ConfigurationError(f"unsupported wav format {fmt!r}")
    sr = buffer.sample_rate
    block_align = bits // 8
    fmt_chunk = struct.pack("<HHIIHH", audio_format, 1, sr, sr * block_align, block_align, bits)
    chunks = [(b"fmt ", fmt_chunk), (b"data", data)]
    if config_hash is not None:
        chunks.append((_HASH_CHUNK_ID, config_hash.encode("ascii")))
    body = b"WAVE"
    for cid, payload in chunks:
        body += cid + struct.pack("<I", len(payload)) + payload
        if len(payload) % 2:
            body += b"\x00"
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", len(body)) + body)


def load_wav(path, target_rate: int | None = SAMPLE_RATE, expected_hash: str | None = None) -> AudioBuffer:
    """Read a WAV file: downmix to mono by averaging, resample to `target_rate`.

    Raises MismatchError if `expected_hash` is given and the file carries a
    different embedded config hash.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise ConfigurationError(f"{path}: not a RIFF/WAVE file")
    pos = 12
    fmt = None
    data = None
    embedded_hash = None
    while pos + 8 <= len(raw):
        cid = raw[pos : pos + 4]
        size = struct.unpack("<I", raw[pos + 4 : pos + 8])[0]
        payload = raw[pos + 8 : pos + 8 + size]
        if cid == b"fmt ":
            fmt = struct.unpack("<HHIIHH", payload[:16])
        elif cid == b"data":
            data = payload
        elif cid == _HASH_CHUNK_ID:
            embedded_hash = payload.decode("ascii")
        pos += 8 + size + (size % 2)
    if fmt is None or data is None:
        raise ConfigurationError(f"{path}: missing fmt or data chunk")
    audio_format, channels, sr, _, _, bits = fmt
    if audio_format == 1 and bits == 16:
        x = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32767.0
    elif audio_format == 3 and bits == 32:
        x = np.frombuffer(data, dtype="<f4").astype(np.float64)
    else:
        raise ConfigurationError(f"{path}: unsupported format (fmt={audio_format}, bits={bits})")
    if channels > 1:
        x = x[: (len(x) // channels) * channels].reshape(-1, channels).mean(axis=1)
    if expected_hash is not None and embedded_hash is not None and embedded_hash != expected_hash:
        raise MismatchError(f"{path}: embedded config hash {embedded_hash} != expected {expected_hash}")
    buf = AudioBuffer(x, sr)
    if target_rate is not None and sr != target_rate:
        buf = resample(buf, target_rate)
    return buf


# ---------------------------------------------------------------------------
# Resampling: windowed-sinc polyphase, 64 zero crossings per side.


def _resample_filter(sr_from: int, sr_to: int, up: int, down: int) -> tuple[np.ndarray, int]:
    cutoff = 0.94 * min(sr_from, sr_to) / 2.0
    rate_up = sr_from * up
    spacing = (rate_up / 2.0) / cutoff  # upsampled samples per sinc zero crossing
    half_len = int(math.ceil(64 * spacing / down)) * down  # divisible by down: integer output delay
    n_taps = 2 * half_len + 1
    beta = scipy.signal.kaiser_beta(90.0)
    h = scipy.signal.firwin(n_taps, cutoff, window=("kaiser", beta), fs=rate_up)
    return h * up, half_len // down


def resample(buffer: AudioBuffer, target_rate: int) -> AudioBuffer:
    """Polyphase windowed-sinc resampling; output length = round(n·ratio)."""
    if target_rate <= 0:
        raise ConfigurationError(f"target_rate must be positive, got {target_rate}")
    if target_rate == buffer.sample_rate:
        return buffer
    g = math.gcd(buffer.sample_rate, target_rate)
    up, down = target_rate // g, buffer.sample_rate // g
    h, delay = _resample_filter(buffer.sample_rate, target_rate, up, down)
    y = scipy.signal.upfirdn(h, buffer.samples, up=up, down=down)
    n_out = int(round(len(buffer) * target_rate / buffer.sample_rate))
    y = y[delay : delay + n_out]
    if y.size < n_out:
        y = np.pad(y, (0, n_out - y.size))
    return AudioBuffer(y, target_rate, buffer.flags)


# ---------------------------------------------------------------------------
# STFT / inverse STFT


def _get_window(window: str, n_fft: int) -> np.ndarray:
    name = {"rectangular": "boxcar", "rect": "boxcar"}.get(window, window)
    try:
        return scipy.signal.get_window(name, n_fft, fftbins=True).astype(np.float64)
    except ValueError as exc:
        raise ConfigurationError(f"unknown window {window!r}") from exc


def stft(buffer: AudioBuffer, n_fft: int = N_FFT, hop: int = HOP, window: str = "hann") -> np.ndarray:
    """Complex spectrogram, shape (n_fft//2 + 1, n_frames).

    Frames start at multiples of `hop` with no centering; the tail is
    zero-padded so every sample is covered.
    """
    if not (n_fft >= hop >= 1):
        raise ConfigurationError(f"need n_fft >= hop >= 1, got n_fft={n_fft}, hop={hop}")
    n = len(buffer)
    if n < n_fft:
        raise SignalTooShortError(f"signal of {n} samples is shorter than one {n_fft}-sample frame")
    w = _get_window(window, n_fft)
    n_frames = 1 + math.ceil((n - n_fft) / hop)
    x = np.pad(buffer.samples, (0, n_fft + (n_frames - 1) * hop - n))
    idx = np.arange(n_fft)[None, :] + hop * np.arange(n_frames)[:, None]
    return np.fft.rfft(x[idx] * w, axis=1).T


def istft(
    spec: np.ndarray,
    n_fft: int = N_FFT,
    hop: int = HOP,
    window: str = "hann",
    length: int | None = None,
) -> AudioBuffer:
    """Overlap-add inversion with window-squared normalization.

    Exact (to float precision) wherever the squared-window overlap is
    nonzero; requires a NOLA-valid window/hop pair.
    """
    w = _get_window(window, n_fft)
    if not scipy.signal.check_NOLA(w, n_fft, n_fft - hop):
        raise ConfigurationError(f"window {window!r} with hop {hop} fails the NOLA inversion condition")
    n_frames = spec.shape[1]
    frames = np.fft.irfft(spec.T, n=n_fft, axis=1)
    total = n_fft + (n_frames - 1) * hop
    num = np.zeros(total)
    den = np.zeros(total)
    for m in range(n_frames):
        sl = slice(m * hop, m * hop + n_fft)
        num[sl] += frames[m] * w
        den[sl] += w * w
    out = np.where(den > 1e-10, num / np.maximum(den, 1e-10), 0.0)
    if length is not None:
        out = out[:length] if out.size >= length else np.pad(out, (0, length - out.size))
    return AudioBuffer(out)


# ---------------------------------------------------------------------------
# Mel analysis


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    sample_rate: int = SAMPLE_RATE,
    n_fft: int = N_FFT,
    n_mels: int = N_MELS,
    fmin: float = FMIN,
    fmax: float = FMAX,
) -> np.ndarray:
    """Triangular unit-peak mel filterbank, shape (n_mels, n_fft//2 + 1)."""
    nyquist = sample_rate / 2.0
    if not (0.0 <= fmin < fmax):
        raise ConfigurationError(f"need 0 <= fmin < fmax, got fmin={fmin}, fmax={fmax}")
    if fmax > nyquist + 1e-9:
        raise ConfigurationError(f"fmax={fmax} exceeds Nyquist {nyquist}")
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    fb = np.zeros((n_mels, freqs.size))
    for m in range(n_mels):
        lo, ctr, hi = edges[m], edges[m + 1], edges[m + 2]
        up = (freqs - lo) / max(ctr - lo, 1e-12)
        dn = (hi - freqs) / max(hi - ctr, 1e-12)
        fb[m] = np.maximum(0.0, np.minimum(up, dn))
    return fb


def mel_center_frequencies(n_mels: int = N_MELS, fmin: float = FMIN, fmax: float = FMAX) -> np.ndarray:
    return mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))[1:-1]


def mel_spectrogram(
    buffer: AudioBuffer,
    n_mels: int = N_MELS,
    fmin: float = FMIN,
    fmax: float | None = None,
    n_fft: int = N_FFT,
    hop: int = HOP,
    floor_db: float = FLOOR_DB,
) -> MelSpec:
    """Log-mel spectrogram in dB, floored `floor_db` below the utterance peak.

    The floor scales with the signal, so scaling the waveform by g shifts
    every entry by exactly 20·log10(g). Pure silence maps uniformly to
    10·log10(_ABS_FLOOR_POWER) + floor_db.
    """
    if fmax is None:
        fmax = buffer.sample_rate / 2.0
    fb = mel_filterbank(buffer.sample_rate, n_fft, n_mels, fmin, fmax)
    power = np.abs(stft(buffer, n_fft, hop, "hann")) ** 2
    mel_power = fb @ power
    floor = max(mel_power.max(), _ABS_FLOOR_POWER) * 10.0 ** (floor_db / 10.0)
    frames = 10.0 * np.log10(np.maximum(mel_power, floor))
    return MelSpec(frames, buffer.sample_rate, hop, n_fft, fmin, fmax, floor_db)


def db_to_mel_power(mel: MelSpec) -> np.ndarray:
    return 10.0 ** (mel.frames / 10.0)


# ---------------------------------------------------------------------------
# Metrics


def mel_cepstra_from_power(mel_power: np.ndarray, n_coeffs: int = MCD_COEFFS) -> np.ndarray:
    """Mel cepstra c_1..c_K per frame from mel power, shape (T, n_coeffs)."""
    from scipy.fft import dct

    log_mel = np.log(np.maximum(mel_power, _ABS_FLOOR_POWER))
    ceps = dct(log_mel, type=2, axis=0, norm="ortho")
    return ceps[1 : n_coeffs + 1].T


def mel_cepstra(buffer: AudioBuffer, n_coeffs: int = MCD_COEFFS, n_mels: int = N_MELS) -> np.ndarray:
    fb = mel_filterbank(buffer.sample_rate, N_FFT, n_mels, FMIN, buffer.sample_rate / 2.0)
    power = np.abs(stft(buffer, N_FFT, HOP, "hann")) ** 2
    return mel_cepstra_from_power(fb @ power, n_coeffs)


def mcd_from_cepstra(ref: np.ndarray, est: np.ndarray) -> float:
    """(10/ln 10)·√2 · mean frame-wise euclidean cepstral distance."""
    if ref.shape != est.shape:
        raise MismatchError(f"cepstra shapes differ: {ref.shape} vs {est.shape}")
    dist = np.sqrt(np.sum((ref - est) ** 2, axis=1))
    return float((10.0 / np.log(10.0)) * np.sqrt(2.0) * dist.mean())


def mcd(ref: AudioBuffer, est: AudioBuffer, n_coeffs: int = MCD_COEFFS) -> float:
    """Mel-cepstral distortion in dB between two sample-aligned signals."""
    if ref.sample_rate != est.sample_rate:
        raise MismatchError(f"sample rates differ: {ref.sample_rate} vs {est.sample_rate}")
    n = min(len(ref), len(est))
    if n < N_FFT:
        raise SignalTooShortError(f"overlap of {n} samples is too short for cepstral analysis")
    a = AudioBuffer(ref.samples[:n], ref.sample_rate)
    b = AudioBuffer(est.samples[:n], est.sample_rate)
    return mcd_from_cepstra(mel_cepstra(a, n_coeffs), mel_cepstra(b, n_coeffs))


def mcd_between_mels(ref: MelSpec, est: MelSpec, n_coeffs: int = MCD_COEFFS) -> float:
    """MCD computed directly between two mel spectrograms (same config)."""
    if not ref.same_config(est):
        raise MismatchError("mel configs differ")
    t = min(ref.n_frames, est.n_frames)
    if t < 1:
        raise SignalTooShortError("no overlapping frames")
    ca = mel_cepstra_from_power(db_to_mel_power(ref)[:, :t], n_coeffs)
    cb = mel_cepstra_from_power(db_to_mel_power(est)[:, :t], n_coeffs)
    return mcd_from_cepstra(ca, cb)


def spectrogram_ssim(ref: MelSpec, est: MelSpec, win: int = 7, data_range: float = 80.0) -> float:
    """Mean structural similarity over sliding windows, clamped to [0, 1].

    Uniform `win`×`win` windows over valid positions, biased moment
    estimates, standard C1/C2 stabilizers on the given dynamic range.
    """
    if ref.frames.shape != est.frames.shape:
        raise MismatchError(f"spectrogram shapes differ: {ref.frames.shape} vs {est.frames.shape}")
    return _ssim_array(ref.frames, est.frames, win, data_range)


def _ssim_array(x: np.ndarray, y: np.ndarray, win: int = 7, data_range: float = 80.0) -> float:
    win = min(win, x.shape[0], x.shape[1])
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2

    def win_mean(a):
        c = np.cumsum(np.cumsum(a, axis=0), axis=1)
        c = np.pad(c, ((1, 0), (1, 0)))
        s = c[win:, win:] - c[:-win, win:] - c[win:, :-win] + c[:-win, :-win]
        return s / (win * win)

    mx, my = win_mean(x), win_mean(y)
    mxx, myy, mxy = win_mean(x * x), win_mean(y * y), win_mean(x * y)
    vx = mxx - mx * mx
    vy = myy - my * my
    cov = mxy - mx * my
    ssim_map = ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
    return float(np.clip(ssim_map.mean(), 0.0, 1.0))


def snr(ref: AudioBuffer, est: AudioBuffer) -> float:
    """10·log10(‖ref‖² / ‖est − ref‖²), clamped to ±100 dB."""
    if ref.sample_rate != est.sample_rate:
        raise MismatchError(f"sample rates differ: {ref.sample_rate} vs {est.sample_rate}")
    if len(ref) != len(est):
        raise MismatchError(f"lengths differ: {len(ref)} vs {len(est)}")
    ref_energy = float(np.sum(ref.samples**2))
    if ref_energy == 0.0:
        raise ConfigurationError("reference signal has zero energy")
    resid = float(np.sum((est.samples - ref.samples) ** 2))
    if resid == 0.0:
        return SNR_CLAMP_DB
    return float(np.clip(10.0 * np.log10(ref_energy / resid), -SNR_CLAMP_DB, SNR_CLAMP_DB))


def metric_report(ref: AudioBuffer, est: AudioBuffer, **extra) -> MetricReport:
    """MCD + spectrogram SSIM + SNR for a sample-aligned (ref, est) pair."""
    n = min(len(ref), len(est))
    a = AudioBuffer(ref.samples[:n], ref.sample_rate)
    b = AudioBuffer(est.samples[:n], est.sample_rate)
    return MetricReport(
        mcd_db=mcd(a, b),
        ssim=spectrogram_ssim(mel_spectrogram(a), mel_spectrogram(b)),
        snr_db=snr(a, b),
        extra=extra,
    )


# ---------------------------------------------------------------------------
# Mel inversion (iterative STFT-consistency phase estimation)


def mel_to_wave(mel: MelSpec, iterations: int = 60, seed: int = 0, length: int | None = None) -> AudioBuffer:
    """Invert a log-mel spectrogram to a waveform.

    Pseudo-inverse of the filterbank recovers a linear-frequency magnitude
    estimate; phases start random from `seed` and are refined by iterative
    STFT-consistency projection. Output is peak-normalized to 0.95 unless
    it is essentially silent.
    """
    if mel.fmax > mel.sample_rate / 2.0 + 1e-9:
        raise ConfigurationError("mel fmax exceeds Nyquist for its own sample rate")
    if iterations < 0:
        raise ConfigurationError("iterations must be >= 0")
    fb = mel_filterbank(mel.sample_rate, mel.n_fft, mel.n_mels, mel.fmin, mel.fmax)
    mel_power = db_to_mel_power(mel)
    lin_power = np.clip(np.linalg.pinv(fb) @ mel_power, 0.0, None)
    mag = np.sqrt(lin_power)
    gen = _rng("mel_to_wave", seed)
    phase = np.exp(2j * np.pi * gen.random(mag.shape))
    n_out = length if length is not None else mel.n_fft + (mag.shape[1] - 1) * mel.hop
    spec = mag * phase
    for _ in range(iterations):
        x = istft(spec, mel.n_fft, mel.hop, "hann")
        re = stft(x, mel.n_fft, mel.hop, "hann")[:, : mag.shape[1]]
        spec = mag * np.exp(1j * np.angle(re))
    x = istft(spec, mel.n_fft, mel.hop, "hann", length=n_out)
    peak = np.abs(x.samples).max()
    if peak > 1e-6:
        return AudioBuffer(x.samples * (0.95 / peak), mel.sample_rate)
    return AudioBuffer(x.samples, mel.sample_rate)
