"""Complex arithmetic over real-stacked tensors.

The engine is real-valued, so a complex m-vector travels as a real
2m-vector [Re_1..Re_m, Im_1..Im_m].  These helpers build the complex
operations the pilot equations need out of engine primitives, keeping
everything differentiable.
"""

from __future__ import annotations

import numpy as np

from .autodiff import (
    Tensor,
    add,
    concat,
    div,
    mul,
    narrow,
    neg,
    sqrt_,
    square,
    sub,
    sum_,
)

__all__ = [
    "NormalizationError",
    "to_pairs",
    "to_complex",
    "halves",
    "c_conj",
    "c_mul",
    "c_inner",
    "c_abs2",
    "unit_norm",
    "unit_modulus",
]


class NormalizationError(ValueError):
    """A vector with (near-)zero norm or modulus reached a normalizer."""


def to_pairs(z: np.ndarray) -> np.ndarray:
    """complex (..., m) -> real (..., 2m) as [Re | Im]."""
    z = np.asarray(z, dtype=np.complex128)
    return np.concatenate([z.real, z.imag], axis=-1)


def to_complex(x: np.ndarray) -> np.ndarray:
    """real (..., 2m) -> complex (..., m)."""
    x = np.asarray(x, dtype=np.float64)
    m = x.shape[-1] // 2
    return x[..., :m] + 1j * x[..., m:]


def halves(x: Tensor) -> tuple[Tensor, Tensor]:
    m = x.value.shape[-1] // 2
    return narrow(x, -1, 0, m), narrow(x, -1, m, m)


def c_conj(a: Tensor) -> Tensor:
    """Complex conjugate of a real-stacked tensor."""
    re, im = halves(a)
    return concat([re, neg(im)], axis=-1)


def c_mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise complex product of two real-stacked tensors."""
    ar, ai = halves(a)
    br, bi = halves(b)
    re = sub(mul(ar, br), mul(ai, bi))
    im = add(mul(ar, bi), mul(ai, br))
    return concat([re, im], axis=-1)


def c_inner(a: Tensor, b: Tensor) -> Tensor:
    """Row-wise complex inner product a^H b, returned as (batch, 2)."""
    ar, ai = halves(a)
    br, bi = halves(b)
    re = sum_(add(mul(ar, br), mul(ai, bi)), axis=-1, keepdims=True)
    im = sum_(sub(mul(ar, bi), mul(ai, br)), axis=-1, keepdims=True)
    return concat([re, im], axis=-1)


def c_abs2(y: Tensor) -> Tensor:
    """|y|^2 of a (batch, 2) complex scalar, returned as (batch, 1)."""
    re = narrow(y, -1, 0, 1)
    im = narrow(y, -1, 1, 1)
    return add(square(re), square(im))


def unit_norm(x: Tensor) -> Tensor:
    """Rows scaled to unit Euclidean norm (equals the complex l2 norm)."""
    norm = sqrt_(sum_(square(x), axis=-1, keepdims=True))
    if np.any(norm.value < 1e-12):
        raise NormalizationError("cannot unit-normalize a zero vector")
    return div(x, norm)


def unit_modulus(x: Tensor) -> Tensor:
    """Each complex entry scaled to unit modulus (phase-only output)."""
    re, im = halves(x)
    mod = sqrt_(add(square(re), square(im)))
    if np.any(mod.value < 1e-12):
        raise NormalizationError("zero complex entry has no phase to keep")
    return concat([div(re, mod), div(im, mod)], axis=-1)
