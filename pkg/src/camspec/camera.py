"""Forward camera model: sensitivity integration, gamut map, response, quantization.

A camera turns scene radiance into a digital triplet in three stages: the
spectral sensitivity reduces the spectrum to a raw tristimulus S, the
gamut map h moves S to the linear value E feeding the response, and the
per-channel response g quantizes E (scaled by exposure time) to a code.
Exposure multiplies E at the response input, matching the reciprocity
identity the response estimator relies on.

The response is stored as a per-channel table of ln g^-1 over all codes;
code lookup interpolates the table in the linear-exposure domain and
rounds half-up, so a linear response is exactly proportional before
quantization.
"""

from __future__ import annotations

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np

from .errors import GridMismatchError, SaturatedCodeError
from .gamut import RbfGamutMap, apply_gamut_map
from .spectral import (
    SensitivityMatrix,
    SpectralCurve,
    SpectralGrid,
    integrate_sensitivity,
    spectral_product,
)

CHANNEL_NAMES = ("r", "g", "b")

#: 8-bit saturation thresholds; codes below/above are unreliable.
DEFAULT_SAT_LO = 10
DEFAULT_SAT_HI = 230


def default_thresholds(bit_depth: int) -> tuple[int, int]:
    """The 8-bit 10/230 saturation thresholds scaled proportionally to other depths."""
    zmax = 2**bit_depth - 1
    return round(DEFAULT_SAT_LO * zmax / 255), round(DEFAULT_SAT_HI * zmax / 255)


@dataclass(frozen=True, eq=False)
class ResponseCurve:
    """Per-channel monotone map between linear exposure and digital code.

    ``ln_e[k][z]`` is ln g_k^-1(z): the log of the linear exposure that
    code z represents. Tables are strictly increasing and finite, which
    makes the inverse lookup well defined at every code.
    """

    bit_depth: int
    ln_e: np.ndarray  # (3, 2**bit_depth)

    def __post_init__(self) -> None:
        if self.bit_depth < 1:
            raise ValueError(f"bit depth must be >= 1, got {self.bit_depth}")
        table = np.array(self.ln_e, dtype=float)
        if table.shape != (3, 2**self.bit_depth):
            raise ValueError(
                f"expected ln_e of shape (3, {2**self.bit_depth}), got {table.shape}"
            )
        if not np.isfinite(table).all():
            raise ValueError("response table must be finite everywhere")
        if (np.diff(table, axis=1) <= 0).any():
            raise ValueError("response table must be strictly increasing per channel")
        table.setflags(write=False)
        object.__setattr__(self, "ln_e", table)

    @property
    def n_codes(self) -> int:
        return 2**self.bit_depth

    @property
    def code_max(self) -> int:
        return self.n_codes - 1

    @cached_property
    def g_inv(self) -> np.ndarray:
        """Linear-domain table exp(ln_e), cached."""
        out = np.exp(self.ln_e)
        out.setflags(write=False)
        return out

    @classmethod
    def from_inverse(cls, fn, bit_depth: int = 8) -> "ResponseCurve":
        """Build from g^-1 given as fn(code_fraction) -> linear exposure.

        Code 0 would map to ln(0); it is floored at half a code so the
        table stays finite.
        """
        zmax = 2**bit_depth - 1
        frac = np.maximum(np.arange(2**bit_depth, dtype=float), 0.5) / zmax
        row = np.log(np.asarray([fn(f) for f in frac], dtype=float))
        return cls(bit_depth, np.tile(row, (3, 1)))

    @classmethod
    def from_gamma(cls, gamma, bit_depth: int = 8) -> "ResponseCurve":
        """Power-law response g(E) = zmax * E^(1/gamma); scalar or per-channel gamma."""
        gammas = np.broadcast_to(np.asarray(gamma, dtype=float), (3,))
        zmax = 2**bit_depth - 1
        frac = np.maximum(np.arange(2**bit_depth, dtype=float), 0.5) / zmax
        table = gammas[:, None] * np.log(frac)[None, :]
        return cls(bit_depth, table)

    @classmethod
    def linear(cls, bit_depth: int = 8) -> "ResponseCurve":
        return cls.from_gamma(1.0, bit_depth)

    def rescaled(self, factor: float) -> "ResponseCurve":
        """Same shape with g^-1 multiplied by a positive constant (gauge change)."""
        if not factor > 0:
            raise ValueError("scale factor must be positive")
        return ResponseCurve(self.bit_depth, self.ln_e + np.log(factor))


def interpolated_code(e_linear: float, curve: ResponseCurve, channel: int) -> float:
    """Pre-quantization code for a linear value: piecewise-linear in exposure,
    clamped at the table ends."""
    table = curve.g_inv[channel]
    v = float(e_linear)
    if v <= table[0]:
        return 0.0
    if v >= table[-1]:
        return float(curve.code_max)
    return float(np.interp(v, table, np.arange(curve.n_codes, dtype=float)))


def apply_response(e_linear: float, curve: ResponseCurve, channel: int) -> int:
    """Digital code for a linear value: nearest table code, half-codes rounded up."""
    return int(np.floor(interpolated_code(e_linear, curve, channel) + 0.5))


def invert_response(
    code: int,
    curve: ResponseCurve,
    channel: int,
    sat_lo: int | None = None,
    sat_hi: int | None = None,
) -> float:
    """Linear exposure represented by a code: exp(ln_e[channel][code]).

    When thresholds are given, codes outside [sat_lo, sat_hi] are refused:
    a saturated code carries no usable exposure information.
    """
    z = int(code)
    if z != code or z < 0 or z > curve.code_max:
        raise SaturatedCodeError(f"code {code} outside table range [0, {curve.code_max}]")
    lo = 0 if sat_lo is None else sat_lo
    hi = curve.code_max if sat_hi is None else sat_hi
    if z < lo or z > hi:
        raise SaturatedCodeError(
            f"code {z} is saturated (valid range [{lo}, {hi}]); cannot invert"
        )
    return float(curve.g_inv[channel, z])


class Saturation(Enum):
    UNDER = "under"
    VALID = "valid"
    OVER = "over"


@dataclass(frozen=True)
class SaturationFlags:
    channels: tuple[Saturation, Saturation, Saturation]

    @property
    def any_saturated(self) -> bool:
        return any(c is not Saturation.VALID for c in self.channels)

    def __iter__(self):
        return iter(self.channels)


def classify_saturation(
    triplet, sat_lo: int = DEFAULT_SAT_LO, sat_hi: int = DEFAULT_SAT_HI
) -> SaturationFlags:
    """Per-channel saturation flags; the threshold codes themselves are valid."""
    if not 0 <= sat_lo < sat_hi:
        raise ValueError(f"need 0 <= sat_lo < sat_hi, got ({sat_lo}, {sat_hi})")
    codes = np.asarray(triplet, dtype=int)
    if codes.shape != (3,):
        raise ValueError(f"expected a code triplet, got shape {codes.shape}")
    flags = tuple(
        Saturation.UNDER if z < sat_lo else Saturation.OVER if z > sat_hi else Saturation.VALID
        for z in codes
    )
    return SaturationFlags(flags)


@dataclass(frozen=True, eq=False)
class CameraModel:
    """Everything needed to simulate a camera, or the output of estimating one.

    ``gamut=None`` means the identity map; stage-1 estimation and the
    simplest synthetic cameras use the same simulation path that way.
    """

    grid: SpectralGrid
    omega: SensitivityMatrix
    response: ResponseCurve
    gamut: RbfGamutMap | None = None
    bit_depth: int = 8
    sat_lo: int = DEFAULT_SAT_LO
    sat_hi: int = DEFAULT_SAT_HI

    def __post_init__(self) -> None:
        if self.omega.grid != self.grid:
            raise GridMismatchError("sensitivity grid differs from the camera grid")
        if self.response.bit_depth != self.bit_depth:
            raise ValueError(
                f"response table is {self.response.bit_depth}-bit, camera declares "
                f"{self.bit_depth}-bit"
            )
        if not 0 <= self.sat_lo < self.sat_hi < 2**self.bit_depth:
            raise ValueError(
                f"need 0 <= sat_lo < sat_hi < {2**self.bit_depth}, "
                f"got ({self.sat_lo}, {self.sat_hi})"
            )

    @property
    def code_max(self) -> int:
        return 2**self.bit_depth - 1

    def classify(self, triplet) -> SaturationFlags:
        return classify_saturation(triplet, self.sat_lo, self.sat_hi)


def simulate_pixel(
    cam: CameraModel, light: SpectralCurve, surface: SpectralCurve, exposure_s: float
) -> np.ndarray:
    """Digital triplet for one patch: quantize(g(h(S) * exposure)) per channel.

    Output is always within code range; spectra that overdrive the
    response simply clamp at the darkest or brightest code.
    """
    if not exposure_s > 0:
        raise ValueError(f"exposure must be positive, got {exposure_s}")
    if light.grid != cam.grid or surface.grid != cam.grid:
        raise GridMismatchError("scene spectra are not on the camera grid; resample first")
    s = integrate_sensitivity(spectral_product(light, surface), cam.omega)
    e = s if cam.gamut is None else apply_gamut_map(cam.gamut, s)
    return np.array(
        [apply_response(e[k] * exposure_s, cam.response, k) for k in range(3)], dtype=int
    )
