"""Analysis of simulated records the way measured records are analysed.

The chain is: analytic signal of the displacement, demodulation into the
slowly varying amplitude and then into a branch frame, Welch spectra,
Lorentzian (Breit-Wigner) fits, eigenmode reconstruction, phase-locking
histograms and intensity cross-correlations.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize, signal

from .frames import ComplexAmplitudeSeries, slow_amplitude, to_branch_frame
from .model import ConfigurationError, ModeParams, NumericalError, ResonanceBranch

MIN_LENGTH = 64
EDGE_FRACTION = 0.05
# "locked" needs the fitted contrast to exceed this many sampling-noise units
LOCK_THRESHOLD = 5.0


class FitError(NumericalError):
    """A least-squares fit did not converge or had nothing to fit."""


class StatisticalPowerError(NumericalError):
    """The record is too short for the requested estimate."""


class PhaseLockWarning(UserWarning):
    """No phase locking detected; the phase estimate is not meaningful."""


# ---------------------------------------------------------------- demodulation

def analytic_signal(x, axis: int = -1) -> np.ndarray:
    """x + i H[x] via the one-sided spectrum (scipy.signal.hilbert)."""
    x = np.asarray(x, dtype=float)
    if x.shape[axis] < MIN_LENGTH:
        raise ConfigurationError(f"need at least {MIN_LENGTH} samples, got {x.shape[axis]}")
    # keep the input itself as the real part (the FFT round trip is inexact)
    return x + 1j * signal.hilbert(x, axis=axis).imag


def edge_slice(n: int, fraction: float = EDGE_FRACTION) -> slice:
    """Indices kept after dropping ``fraction`` of the samples at both ends."""
    k = int(np.ceil(fraction * n))
    return slice(k, n - k)


def lab_series(z, dt: float, zpf: float = 0.5, t0: float = 0.0,
               trim: float = EDGE_FRACTION) -> ComplexAmplitudeSeries:
    """Analytic signal of a displacement record in units of 2 z_zpf, edges trimmed.

    With the default ``zpf`` the values are in the displacement units.
    """
    u = analytic_signal(z) / (2 * zpf)
    keep = edge_slice(u.shape[-1], trim)
    return ComplexAmplitudeSeries(u[..., keep], dt, t0 + keep.start * dt)


def demodulate(series: ComplexAmplitudeSeries, f_demod: float, sign: int) -> ComplexAmplitudeSeries:
    """Multiply by e^{sign i 2 pi f_demod t} (absolute time)."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if abs(f_demod) >= 0.5 * series.sample_rate:
        raise ConfigurationError("demodulation frequency is above Nyquist")
    return series.rotate(sign * 2 * np.pi * f_demod)


def branch_frame_from_records(z1, z2, dt: float, params: ModeParams, branch: ResonanceBranch,
                              mass: float, t0: float = 0.0):
    """Rotating-frame amplitudes of a branch from raw displacement records.

    Uses only the positions: analytic signal, conjugation and demodulation at
    Omega_j, then the branch rotation.  Values are in occupation units.
    """
    from .model import zero_point_length

    zpf1 = float(zero_point_length(mass, params.omega1))
    zpf2 = float(zero_point_length(mass, params.omega2))
    a1 = slow_amplitude(lab_series(z1, dt, zpf1, t0), params.omega1)
    a2 = slow_amplitude(lab_series(z2, dt, zpf2, t0), params.omega2)
    return to_branch_frame(a1, a2, params, branch)


# ---------------------------------------------------------------- spectra

@dataclass(frozen=True)
class PsdEstimate:
    """Welch estimate averaged over all leading axes.

    ``freqs`` in Hz (sorted; negative frequencies present for complex input),
    ``density`` per Hz.
    """

    freqs: np.ndarray
    density: np.ndarray
    n_segments: int
    window: str
    two_sided: bool

    @property
    def resolution(self) -> float:
        return float(self.freqs[1] - self.freqs[0])

    def power(self) -> float:
        """Integral of the density; equals the mean squared signal."""
        return float(np.sum(self.density) * self.resolution)

    def window_slice(self, f_lo: float, f_hi: float) -> "PsdEstimate":
        m = (self.freqs >= f_lo) & (self.freqs <= f_hi)
        return PsdEstimate(self.freqs[m], self.density[m], self.n_segments, self.window,
                           self.two_sided)


def welch_psd(series, segment_length: int, overlap: float = 0.5, window: str = "hann",
              fs: float | None = None) -> PsdEstimate:
    """Averaged modified periodograms; one-sided for real input, two-sided for complex.

    ``series`` is a :class:`ComplexAmplitudeSeries` or an array (then ``fs`` is
    required).  The estimate is averaged over every leading axis (trajectories,
    particles).
    """
    if isinstance(series, ComplexAmplitudeSeries):
        x, fs = series.values, series.sample_rate
    else:
        if fs is None:
            raise ValueError("fs is required for raw arrays")
        x = np.asarray(series)
    n = x.shape[-1]
    if segment_length > n:
        raise ConfigurationError(f"segment length {segment_length} exceeds record length {n}")
    if not 0 <= overlap < 1:
        raise ValueError("overlap must be in [0, 1)")
    noverlap = int(round(overlap * segment_length))
    is_complex = np.iscomplexobj(x)
    f, p = signal.welch(x, fs=fs, window=window, nperseg=segment_length, noverlap=noverlap,
                        detrend=False, return_onesided=not is_complex, scaling="density",
                        axis=-1)
    p = p.reshape(-1, p.shape[-1]).mean(axis=0)
    if is_complex:
        f = np.fft.fftshift(f)
        p = np.fft.fftshift(p)
    step = segment_length - noverlap
    n_seg = (1 + (n - segment_length) // step) * int(np.prod(x.shape[:-1]))
    return PsdEstimate(f, p, n_seg, window, is_complex)


def segment_for_resolution(fs: float, resolution: float, n: int) -> int:
    """Segment length giving a bin width of at most ``resolution`` (Hz), capped at ``n``."""
    seg = int(np.ceil(fs / resolution))
    return min(seg, n)


# ---------------------------------------------------------------- line fits

def lorentzian(f, f0, width, amp, offset):
    """a / ((f - f0)^2 + (width/2)^2) + c."""
    return amp / ((f - f0) ** 2 + 0.25 * width**2) + offset


def double_lorentzian(f, f1, w1, a1, f2, w2, a2, offset):
    return lorentzian(f, f1, w1, a1, 0.0) + lorentzian(f, f2, w2, a2, 0.0) + offset


@dataclass(frozen=True)
class BreitWignerFit:
    """Lorentzian fit: center ``f0`` and full width ``width`` in Hz."""

    f0: float
    width: float
    amplitude: float
    offset: float
    residual: float
    covariance: np.ndarray

    @property
    def f0_err(self) -> float:
        return float(np.sqrt(self.covariance[0, 0]))

    @property
    def width_err(self) -> float:
        return float(np.sqrt(self.covariance[1, 1]))

    @property
    def peak_height(self) -> float:
        return self.amplitude / (0.25 * self.width**2)


def _half_max_width(f, p, i_peak, base):
    half = base + 0.5 * (p[i_peak] - base)
    lo = i_peak
    while lo > 0 and p[lo] > half:
        lo -= 1
    hi = i_peak
    while hi < len(p) - 1 and p[hi] > half:
        hi += 1
    return max(f[hi] - f[lo], 2 * (f[1] - f[0]))


def breit_wigner_fit(psd: PsdEstimate, window: tuple[float, float] | None = None,
                     min_contrast: float = 5.0) -> BreitWignerFit:
    """Least-squares Lorentzian fit, initialized from the peak bin and half-max width."""
    if window is not None:
        psd = psd.window_slice(*window)
    f, p = psd.freqs, psd.density
    if len(f) < 5:
        raise FitError("fewer than 5 frequency bins in the fit window")
    med = float(np.median(p))
    i = int(np.argmax(p))
    if not p[i] > min_contrast * med:
        raise FitError(f"no detectable peak: max/median = {p[i] / med:.3g}")
    base = float(np.min(p))
    width = _half_max_width(f, p, i, base)
    p0 = [f[i], width, (p[i] - base) * 0.25 * width**2, base]
    span = f[-1] - f[0]
    lower = [f[0], 1e-3 * (f[1] - f[0]), 0.0, -np.inf]
    upper = [f[-1], 10 * span, np.inf, np.inf]
    scale = p[i]
    try:
        popt, pcov = optimize.curve_fit(
            lorentzian, f, p / scale,
            p0=[p0[0], p0[1], p0[2] / scale, p0[3] / scale],
            bounds=([lower[0], lower[1], 0.0, -np.inf], [upper[0], upper[1], np.inf, np.inf]),
            maxfev=20000)
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"Breit-Wigner fit failed: {exc} (p0={p0})") from exc
    popt[2] *= scale
    popt[3] *= scale
    pcov = pcov.copy()
    pcov[2, :] *= scale
    pcov[:, 2] *= scale
    pcov[3, :] *= scale
    pcov[:, 3] *= scale
    resid = float(np.sqrt(np.mean((lorentzian(f, *popt) - p) ** 2)) / scale)
    if not np.isfinite(resid):
        raise FitError("non-finite fit residual")
    return BreitWignerFit(float(popt[0]), float(abs(popt[1])), float(popt[2]), float(popt[3]),
                          resid, pcov)


@dataclass(frozen=True)
class DoublePeakFit:
    """Two-Lorentzian fit, peaks ordered by frequency."""

    low: BreitWignerFit
    high: BreitWignerFit
    residual: float

    @property
    def gap(self) -> float:
        return self.high.f0 - self.low.f0


def double_breit_wigner_fit(psd: PsdEstimate, window: tuple[float, float] | None = None,
                            guesses: tuple[float, float] | None = None) -> DoublePeakFit:
    """Fit two Lorentzians plus a constant.

    Initial centres are the two most prominent local maxima unless
    ``guesses`` are given; a single visible peak is split symmetrically.
    """
    if window is not None:
        psd = psd.window_slice(*window)
    f, p = psd.freqs, psd.density
    if len(f) < 8:
        raise FitError("fewer than 8 frequency bins in the fit window")
    df = f[1] - f[0]
    scale = float(np.max(p))
    base = float(np.min(p))
    i_max = int(np.argmax(p))
    width0 = _half_max_width(f, p, i_max, base)
    if guesses is None:
        smooth = np.convolve(p, np.ones(3) / 3, mode="same")
        peaks, props = signal.find_peaks(smooth, prominence=0.02 * scale)
        if len(peaks) >= 2:
            top = peaks[np.argsort(props["prominences"])[-2:]]
            c1, c2 = sorted(f[top])
            width0 = min(width0, c2 - c1)
        else:
            c1, c2 = f[i_max] - 0.25 * width0, f[i_max] + 0.25 * width0
            width0 = 0.5 * width0
    else:
        c1, c2 = sorted(guesses)
        width0 = min(width0, max(c2 - c1, 2 * df))
    h1 = np.interp(c1, f, p) - base
    h2 = np.interp(c2, f, p) - base
    p0 = np.array([c1, width0, max(h1, 1e-3 * scale) * 0.25 * width0**2 / scale,
                   c2, width0, max(h2, 1e-3 * scale) * 0.25 * width0**2 / scale, base / scale])
    span = f[-1] - f[0]
    lo = [f[0], 0.5 * df, 0, f[0], 0.5 * df, 0, -np.inf]
    hi = [f[-1], 2 * span, np.inf, f[-1], 2 * span, np.inf, np.inf]
    try:
        popt, pcov = optimize.curve_fit(double_lorentzian, f, p / scale, p0=p0, bounds=(lo, hi),
                                        maxfev=40000)
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"double Breit-Wigner fit failed: {exc}") from exc
    resid = float(np.sqrt(np.mean((double_lorentzian(f, *popt) - p / scale) ** 2)))
    fits = []
    for k in (0, 3):
        idx = [k, k + 1, k + 2, 6]
        cov = pcov[np.ix_(idx, idx)].copy()
        cov[2:, :] *= scale
        cov[:, 2:] *= scale
        fits.append(BreitWignerFit(float(popt[k]), float(popt[k + 1]), float(popt[k + 2] * scale),
                                   float(popt[6] * scale), resid, cov))
    fits.sort(key=lambda b: b.f0)
    return DoublePeakFit(fits[0], fits[1], resid)


# ---------------------------------------------------------------- spectrogram scan

@dataclass(frozen=True)
class SimSettings:
    """Simulation settings shared by the scan-type pipelines."""

    duration: float
    n_traj: int = 8
    seed: int = 0
    dt: float | None = None
    record_every: int = 4
    burn_in: float = 0.0
    resolution: float | None = None  # Hz, PSD bin width


@dataclass(frozen=True)
class SpectrogramScan:
    """Summed lab-frame PSD of both particles versus optical detuning.

    ``power`` has shape (len(detunings), len(freqs)); ``ridges`` holds the two
    fitted dressed-mode frequencies (Hz) near Omega_1 per detuning (NaN when
    the fit failed); ``g_fit`` is the coupling (Hz) from a hyperbola fit
    gap = sqrt((delta/2pi)^2 + g^2) and ``min_gap`` the smallest ridge gap.
    """

    detunings: np.ndarray
    freqs: np.ndarray
    power: np.ndarray
    ridges: np.ndarray
    min_gap: float
    g_fit: float
    g_fit_err: float


def spectrogram_scan(template: ModeParams, detunings, settings: SimSettings,
                     ridge_halfwidth: float | None = None) -> SpectrogramScan:
    """Simulate each optical detuning and extract avoided-crossing ridges.

    Ridges are fitted in a window of ``ridge_halfwidth`` (Hz, default
    0.75 max(|delta|, g) / 2pi + 2 gamma / 2pi) around Omega_1 - delta / 2.
    The spectrum of particle 2 is shifted down by the modulation frequency and
    added to that of particle 1 before fitting.
    """
    from .langevin import simulate

    detunings = np.asarray(detunings, dtype=float)
    rows, ridges = [], []
    freqs = None
    for i, dw in enumerate(detunings):
        p = template.replace(detuning=float(dw))
        total = settings.burn_in + settings.duration
        ens = simulate(p, dt=settings.dt, duration=total, n_traj=settings.n_traj,
                       seed=settings.seed + i, record_every=settings.record_every)
        i0 = int(round(settings.burn_in / ens.sample_dt))
        z = ens.z[..., i0:]
        fs = 1.0 / ens.sample_dt
        res = settings.resolution or template.gamma / (2 * np.pi) / 10
        seg = segment_for_resolution(fs, res, z.shape[-1])
        psd = welch_psd(z, seg, fs=fs)
        # both particles summed (mean over the particle axis times 2)
        psd = PsdEstimate(psd.freqs, 2 * psd.density, psd.n_segments, psd.window, False)
        if freqs is None:
            freqs = psd.freqs
        rows.append(psd.density)
        f1 = template.omega1 / (2 * np.pi)
        delta_hz = abs(dw - template.mech_detuning) / (2 * np.pi)
        half = ridge_halfwidth or (0.75 * max(delta_hz, template.g / (2 * np.pi))
                                   + 2 * template.gamma / (2 * np.pi))
        # each particle sees both ridges; particle 2 is mapped onto the frame of
        # particle 1 by the modulation frequency so both peaks are strong
        psd1 = welch_psd(z[:, 0], seg, fs=fs)
        psd2 = welch_psd(z[:, 1], seg, fs=fs)
        shifted = np.interp(psd1.freqs + dw / (2 * np.pi), psd2.freqs, psd2.density,
                            left=0.0, right=0.0)
        combined = PsdEstimate(psd1.freqs, psd1.density + shifted, psd1.n_segments,
                               psd1.window, False)
        centre = f1 - 0.5 * (dw - template.mech_detuning) / (2 * np.pi)
        try:
            fit = double_breit_wigner_fit(combined, (centre - half, centre + half))
            ridges.append((fit.low.f0, fit.high.f0))
        except FitError:
            ridges.append((np.nan, np.nan))
    ridges = np.array(ridges)
    gaps = ridges[:, 1] - ridges[:, 0]
    delta_hz = (detunings - template.mech_detuning) / (2 * np.pi)
    ok = np.isfinite(gaps)
    if ok.sum() == 0:
        raise FitError("no ridge fit succeeded")
    min_gap = float(np.nanmin(gaps))
    g0 = template.g / (2 * np.pi) if template.g > 0 else min_gap
    try:
        popt, pcov = optimize.curve_fit(lambda d, g: np.sqrt(d**2 + g**2), delta_hz[ok], gaps[ok],
                                        p0=[max(g0, 1.0)])
        g_fit, g_err = float(abs(popt[0])), float(np.sqrt(pcov[0, 0]))
    except (RuntimeError, ValueError):
        g_fit, g_err = np.nan, np.nan
    return SpectrogramScan(detunings, freqs, np.array(rows), ridges, min_gap, g_fit, g_err)


# ---------------------------------------------------------------- eigenmodes

@dataclass(frozen=True)
class EigenmodeSeries:
    """Reconstructed modes.  ``plus`` is the narrow mode for sin(kd) > 0."""

    plus: ComplexAmplitudeSeries
    minus: ComplexAmplitudeSeries
    phase: float
    locked: bool
    flipped: bool


def reconstruct_eigenmodes(b1: ComplexAmplitudeSeries, b2: ComplexAmplitudeSeries, kd: float,
                           locked: bool | None = None) -> EigenmodeSeries:
    """Form (b1 +- b2 e^{-i dphi})/sqrt(2) with dphi = arg <b1* b2>.

    The labels are exchanged for kd in (-pi, 0) (mod 2 pi), so ``plus`` is
    always the mode whose complex frequency is +g e^{-i kd}/2 at resonance.
    ``locked`` (from :func:`phase_lock_histogram`) can be supplied; when it is
    False a :class:`PhaseLockWarning` is issued and dphi = 0 is used.
    """
    if locked is None:
        locked = phase_lock_histogram(b1, b2).locked
    if locked:
        phase = float(np.angle(np.mean(np.conj(b1.values) * b2.values)))
    else:
        warnings.warn("no phase locking detected; using a zero phase difference",
                      PhaseLockWarning, stacklevel=2)
        phase = 0.0
    b2c = b2.values * np.exp(-1j * phase)
    s = (b1.values + b2c) / np.sqrt(2)
    d = (b1.values - b2c) / np.sqrt(2)
    flipped = bool(np.sin(kd) < 0)
    if flipped:
        s, d = d, s
    plus = b1.with_values(s, phase_correction=0.0)
    minus = b1.with_values(d, phase_correction=0.0)
    return EigenmodeSeries(plus, minus, phase, bool(locked), flipped)


# ---------------------------------------------------------------- phase locking

@dataclass(frozen=True)
class PhaseLockResult:
    """Histogram of arg(b1* b2) on (-pi, pi] with a wrapped-Gaussian fit."""

    centers: np.ndarray
    pdf: np.ndarray
    phase: float
    contrast: float
    noise: float
    locked: bool
    fit_ok: bool
    width: float = np.nan


def wrapped_gaussian(x, mu, sigma, amp, offset, n_wrap: int = 4):
    k = np.arange(-n_wrap, n_wrap + 1)[:, None]
    return offset + amp * np.exp(-0.5 * ((x[None, :] - mu + 2 * np.pi * k) / sigma) ** 2).sum(0)


def _integrated_time(z: np.ndarray, max_lag: int) -> float:
    """Integrated autocorrelation time (samples) of a complex series, averaged over rows."""
    z = z - z.mean(axis=-1, keepdims=True)
    n = z.shape[-1]
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    spec = np.fft.fft(z, nfft, axis=-1)
    acf = np.fft.ifft(np.abs(spec) ** 2, axis=-1)[..., :max_lag].real
    acf = acf.reshape(-1, max_lag).mean(0)
    if acf[0] <= 0:
        return 1.0
    rho = acf / acf[0]
    stop = np.argmax(rho <= 0) if np.any(rho <= 0) else max_lag
    return float(max(1.0, 1 + 2 * rho[1:stop].sum()))


def phase_lock_histogram(b1: ComplexAmplitudeSeries, b2: ComplexAmplitudeSeries,
                         n_bins: int = 64) -> PhaseLockResult:
    """Distribution of the instantaneous phase difference and its contrast.

    The sampling noise of a bin (for a uniform distribution) uses an effective
    sample count corrected for autocorrelation; locking is declared when the
    fitted contrast exceeds ``LOCK_THRESHOLD`` times that noise.
    """
    prod = np.conj(b1.values) * b2.values
    theta = np.angle(prod)
    edges = np.linspace(-np.pi, np.pi, n_bins + 1)
    counts, _ = np.histogram(theta.ravel(), bins=edges)
    width = edges[1] - edges[0]
    centers = 0.5 * (edges[1:] + edges[:-1])
    n = theta.size
    pdf = counts / (n * width)
    rows = theta.reshape(-1, theta.shape[-1])
    tau_int = _integrated_time(np.exp(1j * rows), min(rows.shape[-1] // 4, 4096))
    n_eff = max(n / tau_int, 1.0)
    prob = 1.0 / n_bins
    noise = float(np.sqrt(prob * (1 - prob) / n_eff) / width)
    mu0 = float(np.angle(np.mean(np.exp(1j * theta))))
    try:
        popt, _ = optimize.curve_fit(
            wrapped_gaussian, centers, pdf, p0=[mu0, 1.0, max(pdf.max() - pdf.min(), 1e-3),
                                                   pdf.min()],
            bounds=([-2 * np.pi, 0.3, 0.0, 0.0], [2 * np.pi, 20.0, np.inf, np.inf]), maxfev=20000)
        grid = np.linspace(-np.pi, np.pi, 721)
        model = wrapped_gaussian(grid, *popt)
        contrast = float(model.max() - model.min())
        phase = float(np.angle(np.exp(1j * popt[0])))
        fit_ok, sigma = True, float(popt[1])
    except (RuntimeError, ValueError):
        contrast = float(pdf.max() - pdf.min())
        phase, fit_ok, sigma = mu0, False, np.nan
    return PhaseLockResult(centers, pdf, phase, contrast, noise,
                           bool(contrast > LOCK_THRESHOLD * noise), fit_ok, sigma)


# ---------------------------------------------------------------- correlations

def empirical_g1(b1: ComplexAmplitudeSeries, b2: ComplexAmplitudeSeries,
                 max_lag: float) -> tuple[np.ndarray, np.ndarray]:
    """<conj(b1(t)) b2(t + tau)> by FFT, averaged over records; returns (tau, values)."""
    x1 = np.atleast_2d(b1.values)
    x2 = np.atleast_2d(b2.values)
    n = x1.shape[-1]
    x1, x2 = x1.reshape(-1, n), x2.reshape(-1, n)
    m = int(round(max_lag / b1.dt))
    if not 1 <= m < n:
        raise StatisticalPowerError(f"max lag of {m} samples does not fit a record of {n}")
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    cc = np.fft.ifft(np.conj(np.fft.fft(x1, nfft, axis=-1)) * np.fft.fft(x2, nfft, axis=-1),
                     axis=-1)
    lags = np.arange(-m, m + 1)
    values = (cc[:, lags % nfft] / (n - np.abs(lags))).mean(axis=0)
    return lags * b1.dt, values


@dataclass(frozen=True)
class G2Series:
    """Normalized intensity cross-correlation <I1(t) I2(t+tau)>/(<I1><I2>) - 1."""

    tau: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    n_records: int


def empirical_g2(a1: ComplexAmplitudeSeries, a2: ComplexAmplitudeSeries, max_lag: float,
                 min_duration_factor: float = 10.0) -> G2Series:
    """Intensity cross-correlation by FFT, averaged over records (leading axis).

    Each record gives its own estimate; ``stderr`` is the spread across
    records divided by sqrt(n_records).  The record must be at least
    ``min_duration_factor`` times longer than ``max_lag``.
    """
    i1 = np.abs(np.atleast_2d(a1.values)) ** 2
    i2 = np.abs(np.atleast_2d(a2.values)) ** 2
    n = i1.shape[-1]
    dt = a1.dt
    m = int(round(max_lag / dt))
    if n < min_duration_factor * m or m < 1:
        raise StatisticalPowerError(
            f"record of {n} samples is too short for lags up to {m} samples")
    i1 = i1.reshape(-1, n)
    i2 = i2.reshape(-1, n)
    mean1 = i1.mean(axis=-1, keepdims=True)
    mean2 = i2.mean(axis=-1, keepdims=True)
    d1, d2 = i1 - mean1, i2 - mean2
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    f1 = np.fft.rfft(d1, nfft, axis=-1)
    f2 = np.fft.rfft(d2, nfft, axis=-1)
    cc = np.fft.irfft(np.conj(f1) * f2, nfft, axis=-1)  # cc[k] = sum_t d1[t] d2[t + k]
    lags = np.arange(-m, m + 1)
    counts = n - np.abs(lags)
    cov = cc[:, lags % nfft] / counts
    per_record = cov / (mean1 * mean2)
    values = per_record.mean(axis=0)
    nrec = per_record.shape[0]
    stderr = (per_record.std(axis=0, ddof=1) / np.sqrt(nrec) if nrec > 1
              else np.full_like(values, np.nan))
    return G2Series(lags * dt, values, stderr, nrec)


def g2_band(delta: float, f_ref: float = 1e3) -> tuple[float, float]:
    """Band-pass edges (Hz) around the effective detuning ``delta`` (rad/s).

    [sqrt(0.4 d^2 + 0.1^2), sqrt(1.5 d^2 + 0.5^2)] * f_ref with d = |delta| / (2 pi f_ref).
    """
    d = abs(delta) / (2 * np.pi * f_ref)
    return f_ref * np.sqrt(0.4 * d**2 + 0.01), f_ref * np.sqrt(1.5 * d**2 + 0.25)


@dataclass(frozen=True)
class G2PhaseFit:
    """Cosine phases psi of the filtered g2 for tau >= 0 and tau < 0 and their circular mean.

    Model on each side: c e^{-kappa |tau|} cos(omega tau - psi).
    """

    phase_pos: float
    phase_neg: float
    phase_mean: float
    omega: float
    filtered: np.ndarray
    params_pos: np.ndarray
    params_neg: np.ndarray


def bandpass(values, dt: float, band: tuple[float, float], order: int = 2) -> np.ndarray:
    """Zero-phase Butterworth band-pass (forward-backward)."""
    nyq = 0.5 / dt
    lo, hi = band
    if not 0 < lo < hi < nyq:
        raise ConfigurationError(f"band {band} Hz does not fit below Nyquist {nyq} Hz")
    sos = signal.butter(order, [lo, hi], btype="bandpass", fs=1.0 / dt, output="sos")
    return signal.sosfiltfilt(sos, values)


def filtered_g2_fit(series: G2Series, delta: float, f_ref: float = 1e3,
                    fit_span: float | None = None, gamma: float | None = None) -> G2PhaseFit:
    """Band-pass the g2 series around |delta| and fit cosines on both sides of tau = 0.

    ``fit_span`` limits the fitted |tau| range (default: 3/gamma if ``gamma``
    is given, else the whole series).
    """
    tau = series.tau
    dt = tau[1] - tau[0]
    filt = bandpass(series.values, dt, g2_band(delta, f_ref))
    span = fit_span if fit_span is not None else (3.0 / gamma if gamma else np.inf)
    omega0 = abs(delta)

    def model(t, c, kappa, omega, psi):
        return c * np.exp(-kappa * np.abs(t)) * np.cos(omega * t - psi)

    results = []
    for side in (tau >= 0, tau < 0):
        m = side & (np.abs(tau) <= span)
        t, y = tau[m], filt[m]
        if len(t) < 8:
            raise StatisticalPowerError("too few lags in the g2 fit window")
        # initial phase from projection on the expected oscillation
        z = np.sum(y * np.exp(-1j * omega0 * t))
        psi0 = float(np.angle(np.conj(z)))
        c0 = float(np.max(np.abs(y))) or 1e-12
        kappa0 = gamma if gamma else 1.0 / (np.max(np.abs(t)) + dt)
        try:
            popt, _ = optimize.curve_fit(model, t, y, p0=[c0, kappa0, omega0, psi0],
                                         bounds=([0, 0, 0.5 * omega0, -np.inf],
                                                 [np.inf, np.inf, 1.5 * omega0 + 1, np.inf]),
                                         maxfev=20000)
        except (RuntimeError, ValueError) as exc:
            raise FitError(f"g2 cosine fit failed: {exc}") from exc
        results.append(popt)
    psi_p = float(np.angle(np.exp(1j * results[0][3])))
    psi_n = float(np.angle(np.exp(1j * results[1][3])))
    mean = float(np.angle(np.exp(1j * psi_p) + np.exp(1j * psi_n)))
    omega = 0.5 * (results[0][2] + results[1][2])
    return G2PhaseFit(psi_p, psi_n, mean, float(omega), filt, results[0], results[1])


@dataclass(frozen=True)
class KdEstimate:
    """kd (mod pi) from the filtered g2 phase of a simulated ensemble."""

    kd: float
    phase: float
    fit: G2PhaseFit
    series: G2Series


def estimate_kd(params: ModeParams, settings: SimSettings, max_lag: float | None = None,
                branch: ResonanceBranch | None = None, batch: int = 25,
                f_ref: float = 1e3, **sim_kwargs) -> KdEstimate:
    """Simulate, correlate intensities, band-pass and invert the g2 phase for kd.

    Trajectories are simulated ``batch`` at a time; the per-batch g2 estimates
    are pooled with weights equal to their trajectory counts.  ``max_lag``
    defaults to 8/gamma.  Extra keyword arguments go to the simulator.
    """
    from .correlations import _sign_of_delta, kd_from_phase
    from .langevin import simulate, to_complex_amplitudes
    from .model import DETUNING

    branch = branch or DETUNING
    max_lag = max_lag if max_lag is not None else 8.0 / params.gamma
    values, per_record, done = 0.0, [], 0
    tau = None
    for start in range(0, settings.n_traj, batch):
        n = min(batch, settings.n_traj - start)
        ens = simulate(params, dt=settings.dt, duration=settings.burn_in + settings.duration,
                       n_traj=n, seed=settings.seed, traj_offset=start,
                       record_every=settings.record_every, **sim_kwargs)
        a1, a2 = to_complex_amplitudes(ens)
        i0 = int(round(settings.burn_in / ens.sample_dt))
        s = empirical_g2(a1.slice(i0), a2.slice(i0), max_lag)
        tau = s.tau
        values = values + s.values * n
        # stderr^2 * n_rec gives the per-record variance of this batch
        per_record.append((n, s.stderr))
        done += n
    values = values / done
    var = sum(m * (m - 1) * se**2 for m, se in per_record if m > 1) / max(done - 1, 1)
    series = G2Series(tau, values, np.sqrt(var / done), done)
    delta = branch.effective_detuning(params)
    fit = filtered_g2_fit(series, delta, f_ref=f_ref, gamma=params.gamma)
    kd = kd_from_phase(fit.phase_mean, branch, _sign_of_delta(params, branch))
    return KdEstimate(float(kd), fit.phase_mean, fit, series)


@dataclass(frozen=True)
class PinningResult:
    """Fitted lab-frame peak shifts (Hz) relative to an uncoupled control run.

    Rows are (particle 1, particle 2); ``static`` is the Delta omega = 0 run and
    ``modulated`` the run at the requested optical detuning.
    """

    reference: np.ndarray
    static: np.ndarray
    modulated: np.ndarray
    static_err: np.ndarray
    modulated_err: np.ndarray
    gamma_hz: float

    @property
    def pinned(self) -> bool:
        return bool(np.all(np.abs(self.modulated) < 0.1 * self.gamma_hz))

    @property
    def static_shifted(self) -> bool:
        return bool(np.any(np.abs(self.static) > 0.1 * self.gamma_hz))


def _peak_frequencies(params: ModeParams, settings: SimSettings, halfwidth: float):
    from .langevin import simulate

    ens = simulate(params, dt=settings.dt, duration=settings.burn_in + settings.duration,
                   n_traj=settings.n_traj, seed=settings.seed, record_every=settings.record_every)
    i0 = int(round(settings.burn_in / ens.sample_dt))
    z = ens.z[..., i0:]
    fs = 1.0 / ens.sample_dt
    res = settings.resolution or params.gamma / (2 * np.pi) / 50
    seg = segment_for_resolution(fs, res, z.shape[-1])
    f0, err = [], []
    for j, omega in enumerate((params.omega1, params.omega2)):
        f = omega / (2 * np.pi)
        fit = breit_wigner_fit(welch_psd(z[:, j], seg, fs=fs), (f - halfwidth, f + halfwidth))
        f0.append(fit.f0)
        err.append(fit.f0_err)
    return np.array(f0), np.array(err)


def frequency_pinning(params: ModeParams, settings: SimSettings,
                      halfwidth: float | None = None) -> PinningResult:
    """Compare peak frequencies of static, modulated and uncoupled runs.

    ``params.detuning`` is the modulated run; the static control uses
    Delta omega = 0 and the reference g = 0.  All three share the seed.
    ``halfwidth`` (Hz) of the fit window defaults to 4 gamma / 2pi.
    """
    half = halfwidth or 4 * params.gamma / (2 * np.pi)
    ref, ref_err = _peak_frequencies(params.replace(g=0.0), settings, half)
    stat, stat_err = _peak_frequencies(params.replace(detuning=0.0), settings, half)
    mod, mod_err = _peak_frequencies(params, settings, half)
    return PinningResult(ref, stat - ref, mod - ref, np.hypot(stat_err, ref_err),
                         np.hypot(mod_err, ref_err), params.gamma / (2 * np.pi))


def exchange_frequency(t, occ1, occ2, omega_guess: float, gamma: float) -> tuple[float, float]:
    """Angular frequency (and its standard error) of the occupation exchange.

    Fits occ1 - occ2 with a damped cosine plus a second decaying term and a
    constant.  ``omega_guess`` seeds the frequency, ``gamma`` the decay rates.
    """
    t = np.asarray(t, dtype=float)
    t = t - t[0]
    d = np.asarray(occ1, dtype=float) - np.asarray(occ2, dtype=float)
    scale = float(np.max(np.abs(d))) or 1.0

    def model(t, a, b, kappa, omega, c, kappa2, off):
        return (np.exp(-kappa * t) * (a * np.cos(omega * t) + b * np.sin(omega * t))
                + c * np.exp(-kappa2 * t) + off)

    p0 = [d[0] / scale, 0.0, 0.5 * gamma, omega_guess, 0.0, gamma, 0.0]
    try:
        popt, pcov = optimize.curve_fit(model, t, d / scale, p0=p0, maxfev=20000)
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"exchange fit failed: {exc}") from exc
    return float(abs(popt[3])), float(np.sqrt(pcov[3, 3]))


def collective_variances(b1: ComplexAmplitudeSeries, b2: ComplexAmplitudeSeries) -> tuple[float, float]:
    """Empirical variances of (b1 -+ b2)/sqrt(2), pooled over records and time."""
    zp = 0.5 * float(np.mean(np.abs(b1.values - b2.values) ** 2))
    zm = 0.5 * float(np.mean(np.abs(b1.values + b2.values) ** 2))
    return zp, zm


@dataclass(frozen=True)
class EigenmodeSplitting:
    """Complex splitting of the reconstructed eigenmodes at one kd.

    ``measured`` = 2 pi (f+ - f-) + i pi (width+ - width-) in rad/s, to be
    compared with ``analytic``, the root of Lambda^2 that equals g e^{-i kd}
    on resonance.
    """

    kd: float
    measured: complex
    analytic: complex
    plus: BreitWignerFit
    minus: BreitWignerFit
    phase: float
    locked: bool
    psd_plus: PsdEstimate
    psd_minus: PsdEstimate


def eigenmode_splitting(params: ModeParams, settings: SimSettings,
                        fit_halfwidth: float = 3000.0) -> EigenmodeSplitting:
    """Simulate on the detuning branch, rebuild the eigenmodes and fit both lines.

    Lines are fitted within +-``fit_halfwidth`` Hz of the rotating-frame origin.
    """
    from .langevin import simulate, to_complex_amplitudes
    from .model import DETUNING
    from .rwa import branch_lambda

    ens = simulate(params, dt=settings.dt, duration=settings.burn_in + settings.duration,
                   n_traj=settings.n_traj, seed=settings.seed, record_every=settings.record_every)
    a1, a2 = to_complex_amplitudes(ens)
    i0 = int(round(settings.burn_in / ens.sample_dt))
    b1, b2 = to_branch_frame(a1.slice(i0), a2.slice(i0), params, DETUNING)
    em = reconstruct_eigenmodes(b1, b2, params.kd)
    res = settings.resolution or params.gamma / (2 * np.pi) / 40
    seg = segment_for_resolution(b1.sample_rate, res, b1.n)
    window = (-fit_halfwidth, fit_halfwidth)
    psd_p, psd_m = welch_psd(em.plus, seg), welch_psd(em.minus, seg)
    fp = breit_wigner_fit(psd_p, window)
    fm = breit_wigner_fit(psd_m, window)
    measured = 2 * np.pi * (fp.f0 - fm.f0) + 1j * np.pi * (fp.width - fm.width)
    # the root of Lambda^2 continuous with g e^{-i kd} at resonance
    lam = branch_lambda(params, DETUNING)
    ref = params.g * np.exp(-1j * params.kd)
    lam = lam if abs(lam - ref) <= abs(lam + ref) else -lam
    return EigenmodeSplitting(params.kd, complex(measured), complex(lam),
                              fp, fm, em.phase, em.locked, psd_p, psd_m)
