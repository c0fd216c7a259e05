"""Deterministic per-sample transforms for transformation scenarios.

Descriptor grammar (round-trips through :func:`describe` / :func:`parse_transform`)::

    transform := "identity"
               | "rot:" DEGREES
               | "perm:" SEED ":" N
               | "invperm:" SEED ":" N
               | "compose:[" [transform ("," transform)*] "]"

``rot`` descriptors carry no image size; the parser binds them to the
``image_shape`` it is given.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence, Union

import numpy as np

from .errors import DimensionMismatch, MissingImageShape, NotInvertible, ParseError
from .rng import check_seed, permutation


@dataclass(frozen=True)
class Identity:
    def apply(self, x: np.ndarray) -> np.ndarray:
        return np.array(x, dtype=np.float64, copy=True)

    def inverse(self) -> Identity:
        return self

    def describe(self) -> str:
        return "identity"


@dataclass(frozen=True)
class Rotation:
    """Counter-clockwise rotation of a ``height x width`` image about its centre.

    Row 0 is the top of the image. Quarter turns that keep the grid (any
    multiple of 180 degrees, or 90/270 on square images) are exact index
    remaps; every other angle inverse-maps each output pixel into the source
    and interpolates bilinearly, reading zeros outside the source.
    """

    degrees: float
    height: int
    width: int

    def __post_init__(self) -> None:
        if not math.isfinite(self.degrees):
            raise ValueError(f"rotation angle must be finite, got {self.degrees!r}")
        if self.height < 1 or self.width < 1:
            raise ValueError("image dimensions must be positive")

    @property
    def size(self) -> int:
        return self.height * self.width

    @property
    def quarter_turns(self) -> int | None:
        reduced = math.fmod(self.degrees, 360.0)
        if reduced < 0:
            reduced += 360.0
        if reduced % 90.0 == 0.0:
            return int(reduced // 90.0) % 4
        return None

    @property
    def is_exact(self) -> bool:
        k = self.quarter_turns
        return k is not None and (k % 2 == 0 or self.height == self.width)

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.size,):
            raise DimensionMismatch(
                f"rotation over {self.height}x{self.width} expects {self.size} values, got {x.shape}"
            )
        img = x.reshape(self.height, self.width)
        if self.is_exact:
            return np.rot90(img, self.quarter_turns).reshape(-1).copy()
        return _rotate_bilinear(img, self.degrees, self.quarter_turns).reshape(-1)

    def inverse(self) -> Rotation:
        if not self.is_exact:
            raise NotInvertible(
                f"rotation by {_fmt_degrees(self.degrees)} degrees on a "
                f"{self.height}x{self.width} grid loses information"
            )
        return Rotation(float((4 - self.quarter_turns) % 4 * 90), self.height, self.width)

    def describe(self) -> str:
        return f"rot:{_fmt_degrees(self.degrees)}"


def _rotate_bilinear(img: np.ndarray, degrees: float, quarter_turns: int | None) -> np.ndarray:
    h, w = img.shape
    if quarter_turns is not None:
        cos, sin = ((1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0))[quarter_turns]
    else:
        theta = math.radians(degrees)
        cos, sin = math.cos(theta), math.sin(theta)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rows, cols = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    dy, dx = rows - cy, cols - cx
    # source of each output pixel: rotate back by -theta (image y axis points down)
    src_x = cx + dx * cos - dy * sin
    src_y = cy + dx * sin + dy * cos

    r0 = np.floor(src_y).astype(np.int64)
    c0 = np.floor(src_x).astype(np.int64)
    fy = src_y - r0
    fx = src_x - c0
    out = np.zeros((h, w), dtype=np.float64)
    for dr, dc, weight in (
        (0, 0, (1 - fy) * (1 - fx)),
        (0, 1, (1 - fy) * fx),
        (1, 0, fy * (1 - fx)),
        (1, 1, fy * fx),
    ):
        r = r0 + dr
        c = c0 + dc
        inside = (r >= 0) & (r < h) & (c >= 0) & (c < w)
        vals = np.zeros((h, w), dtype=np.float64)
        vals[inside] = img[r[inside], c[inside]]
        out += weight * vals
    return out


@dataclass(frozen=True)
class Permutation:
    """Pixel shuffle ``y[i] = x[mapping[i]]`` with a seeded Fisher-Yates mapping.

    ``inverted`` selects the inverse bijection of the same seeded mapping.
    """

    seed: int
    n: int
    inverted: bool = False

    def __post_init__(self) -> None:
        check_seed(self.seed)
        if self.n < 1:
            raise ValueError(f"permutation length must be positive, got {self.n}")

    @property
    def size(self) -> int:
        return self.n

    @cached_property
    def mapping(self) -> np.ndarray:
        forward = np.array(permutation(self.seed, self.n), dtype=np.int64)
        if not self.inverted:
            forward.flags.writeable = False
            return forward
        inv = np.empty_like(forward)
        inv[forward] = np.arange(self.n, dtype=np.int64)
        inv.flags.writeable = False
        return inv

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise DimensionMismatch(f"permutation of length {self.n} got input of shape {x.shape}")
        return x[self.mapping]

    def inverse(self) -> Permutation:
        return Permutation(self.seed, self.n, not self.inverted)

    def describe(self) -> str:
        prefix = "invperm" if self.inverted else "perm"
        return f"{prefix}:{self.seed}:{self.n}"


@dataclass(frozen=True)
class Composition:
    """Apply ``parts`` left to right."""

    parts: tuple[Transform, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "parts", tuple(self.parts))

    def apply(self, x: np.ndarray) -> np.ndarray:
        out = np.array(x, dtype=np.float64, copy=True)
        for part in self.parts:
            out = part.apply(out)
        return out

    def inverse(self) -> Composition:
        return Composition(tuple(p.inverse() for p in reversed(self.parts)))

    def describe(self) -> str:
        return "compose:[" + ",".join(p.describe() for p in self.parts) + "]"


Transform = Union[Identity, Rotation, Permutation, Composition]

IDENTITY = Identity()


def apply(t: Transform, x: np.ndarray) -> np.ndarray:
    return t.apply(x)


def invert(t: Transform) -> Transform:
    return t.inverse()


def describe(t: Transform) -> str:
    return t.describe()


def make_permutation(seed: int, n: int) -> Permutation:
    return Permutation(seed, n)


def rotations(step: float, count: int, shape: tuple[int, int]) -> list[Rotation]:
    """``count`` rotations at ``0, step, 2*step, ...`` degrees."""
    h, w = shape
    return [Rotation(float(k * step), h, w) for k in range(count)]


def leaves(t: Transform) -> list[Transform]:
    if isinstance(t, Composition):
        return [leaf for part in t.parts for leaf in leaves(part)]
    return [t]


def check_compatible(t: Transform, feature_dim: int, image_shape: tuple[int, int] | None) -> None:
    """Raise if ``t`` cannot be applied to vectors of a dataset with this geometry."""
    for leaf in leaves(t):
        if isinstance(leaf, Rotation):
            if image_shape is None:
                raise MissingImageShape("rotation transforms need a dataset with an image_shape")
            if (leaf.height, leaf.width) != tuple(image_shape):
                raise DimensionMismatch(
                    f"rotation over {leaf.height}x{leaf.width} on images of shape "
                    f"{image_shape[0]}x{image_shape[1]}"
                )
        elif isinstance(leaf, Permutation) and leaf.n != feature_dim:
            raise DimensionMismatch(f"permutation of length {leaf.n} on feature_dim {feature_dim}")


def _fmt_degrees(degrees: float) -> str:
    if float(degrees).is_integer():
        return str(int(degrees))
    return repr(float(degrees))


def _split_top_level(body: str) -> list[str]:
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(body):
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
            if depth < 0:
                raise ParseError(f"unbalanced brackets in {body!r}")
        elif ch == "," and depth == 0:
            parts.append(body[start:i])
            start = i + 1
    if depth != 0:
        raise ParseError(f"unbalanced brackets in {body!r}")
    parts.append(body[start:])
    return parts


def parse_transform(text: str, image_shape: tuple[int, int] | None = None) -> Transform:
    text = text.strip()
    if text == "identity":
        return IDENTITY
    if text.startswith("compose:[") and text.endswith("]"):
        body = text[len("compose:[") : -1]
        if not body.strip():
            return Composition(())
        return Composition(tuple(parse_transform(p, image_shape) for p in _split_top_level(body)))
    head, _, rest = text.partition(":")
    if head == "rot":
        try:
            degrees = float(rest)
        except ValueError:
            degrees = math.nan
        if not math.isfinite(degrees):
            raise ParseError(f"malformed transform descriptor {text!r}")
        if image_shape is None:
            raise MissingImageShape(f"{text!r} needs an image shape to bind to")
        return Rotation(degrees, image_shape[0], image_shape[1])
    if head in ("perm", "invperm"):
        parts = rest.split(":")
        try:
            if len(parts) != 2 or not all(p.isdigit() for p in parts):
                raise ValueError
            return Permutation(int(parts[0]), int(parts[1]), head == "invperm")
        except ValueError:
            raise ParseError(f"malformed transform descriptor {text!r}") from None
    raise ParseError(f"unknown transform descriptor {text!r}")


def parse_transforms(texts: Sequence[str], image_shape: tuple[int, int] | None = None) -> list[Transform]:
    return [parse_transform(t, image_shape) for t in texts]
