"""Phase congruency of a 2-D image via a log-Gabor filter bank.

Phase congruency marks features (edges, lines) where the Fourier components
of the local signal agree in phase, independent of contrast.  The map is
built from a bank of log-Gabor filters over ``nscale`` scales and ``norient``
orientations: per orientation, the filter responses are summed into a local
energy vector, projected responses accumulate the congruent energy, an
orientation-specific noise threshold (estimated from the smallest-scale
response distribution) is subtracted, and the result is normalized by the
total response amplitude.

Everything runs in float64 on the full FFT grid.  Constants default to the
values conventionally paired with feature-similarity scoring.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError


def _frequency_range(size: int) -> np.ndarray:
    """Normalized frequency coordinates for one axis, centered like fftshift."""
    if size % 2:
        return np.arange(-(size - 1) // 2, (size - 1) // 2 + 1) / (size - 1)
    return np.arange(-(size // 2), size // 2) / size


def _radius_grid(rows: int, cols: int) -> tuple[np.ndarray, np.ndarray]:
    """Radius and angle grids in filter (unshifted FFT) layout."""
    x, y = np.meshgrid(_frequency_range(cols), _frequency_range(rows))
    radius = np.fft.ifftshift(np.sqrt(x * x + y * y))
    theta = np.fft.ifftshift(np.arctan2(-y, x))
    return radius, theta


def lowpass_filter(shape: tuple[int, int], cutoff: float = 0.45, order: int = 15
                   ) -> np.ndarray:
    """Butterworth lowpass in the frequency domain, unshifted layout."""
    if not 0 < cutoff <= 0.5:
        raise ShapeError(f"cutoff {cutoff} must lie in (0, 0.5]")
    radius, _ = _radius_grid(*shape)
    return 1.0 / (1.0 + (radius / cutoff) ** (2 * order))


def log_gabor_bank(
    shape: tuple[int, int],
    nscale: int = 4,
    min_wavelength: float = 6.0,
    mult: float = 2.0,
    sigma_on_f: float = 0.55,
) -> list[np.ndarray]:
    """Radial log-Gabor transfer functions, one per scale, DC forced to 0."""
    rows, cols = shape
    radius, _ = _radius_grid(rows, cols)
    radius = radius.copy()
    radius[0, 0] = 1.0  # avoid log(0) at DC; the DC gain is zeroed anyway
    lp = lowpass_filter(shape)
    bank = []
    log_sigma2 = 2.0 * np.log(sigma_on_f) ** 2
    for s in range(nscale):
        f0 = 1.0 / (min_wavelength * mult**s)
        g = np.exp(-(np.log(radius / f0) ** 2) / log_sigma2) * lp
        g[0, 0] = 0.0
        bank.append(g)
    return bank


def orientation_spreads(
    shape: tuple[int, int], norient: int = 4, d_theta_on_sigma: float = 1.2
) -> list[np.ndarray]:
    """Angular Gaussian weighting per orientation, unshifted layout."""
    _, theta = _radius_grid(*shape)
    sin_t, cos_t = np.sin(theta), np.cos(theta)
    theta_sigma = np.pi / norient / d_theta_on_sigma
    spreads = []
    for o in range(norient):
        angle = o * np.pi / norient
        ds = sin_t * np.cos(angle) - cos_t * np.sin(angle)
        dc = cos_t * np.cos(angle) + sin_t * np.sin(angle)
        dtheta = np.abs(np.arctan2(ds, dc))
        spreads.append(np.exp(-(dtheta**2) / (2.0 * theta_sigma**2)))
    return spreads


def phase_congruency(
    img: np.ndarray,
    nscale: int = 4,
    norient: int = 4,
    min_wavelength: float = 6.0,
    mult: float = 2.0,
    sigma_on_f: float = 0.55,
    d_theta_on_sigma: float = 1.2,
    k: float = 2.0,
    epsilon: float = 1e-4,
) -> np.ndarray:
    """Phase congruency map of a 2-D image, values in [0, 1].

    ``k`` scales the noise threshold (standard deviations above the estimated
    noise energy); ``epsilon`` guards divisions.
    """
    if img.ndim != 2:
        raise ShapeError(f"phase congruency needs a 2-D image, got {img.shape}")
    im = np.asarray(img, dtype=np.float64)
    rows, cols = im.shape
    image_fft = np.fft.fft2(im)
    gabors = log_gabor_bank((rows, cols), nscale, min_wavelength, mult, sigma_on_f)
    spreads = orientation_spreads((rows, cols), norient, d_theta_on_sigma)

    total_energy = np.zeros((rows, cols))
    total_amplitude = np.zeros((rows, cols))
    scale_norm = np.sqrt(rows * cols)
    for spread in spreads:
        responses = []
        spatial_filters = []
        em_n = 0.0
        for s, gabor in enumerate(gabors):
            filt = gabor * spread
            spatial_filters.append(np.real(np.fft.ifft2(filt)) * scale_norm)
            responses.append(np.fft.ifft2(image_fft * filt))
            if s == 0:
                em_n = float(np.sum(filt * filt))

        sum_e = np.sum([r.real for r in responses], axis=0)
        sum_o = np.sum([r.imag for r in responses], axis=0)
        sum_an = np.sum([np.abs(r) for r in responses], axis=0)
        x_energy = np.sqrt(sum_e * sum_e + sum_o * sum_o) + epsilon
        mean_e = sum_e / x_energy
        mean_o = sum_o / x_energy
        energy = np.zeros((rows, cols))
        for r in responses:
            e, o = r.real, r.imag
            energy += e * mean_e + o * mean_o - np.abs(e * mean_o - o * mean_e)

        # Noise threshold: the median of the smallest-scale response energy
        # estimates the noise floor; Rayleigh statistics give mean and sigma
        # of the summed noise energy, thresholded at k sigmas and rescaled.
        median_e2n = float(np.median(np.abs(responses[0]) ** 2))
        mean_e2n = median_e2n / np.log(2.0)
        noise_power = mean_e2n / em_n
        est_sum_an2 = 0.0
        est_sum_aiaj = 0.0
        for si in range(nscale):
            est_sum_an2 += float(np.sum(spatial_filters[si] ** 2))
            for sj in range(si + 1, nscale):
                est_sum_aiaj += float(
                    np.sum(spatial_filters[si] * spatial_filters[sj])
                )
        est_noise_energy2 = 2.0 * noise_power * est_sum_an2 + (
            4.0 * noise_power * est_sum_aiaj
        )
        tau = np.sqrt(est_noise_energy2 / 2.0)
        est_noise_energy = tau * np.sqrt(np.pi / 2.0)
        est_noise_sigma = np.sqrt((2.0 - np.pi / 2.0) * tau * tau)
        threshold = (est_noise_energy + k * est_noise_sigma) / 1.7

        total_energy += np.maximum(energy - threshold, 0.0)
        total_amplitude += sum_an

    return total_energy / total_amplitude
