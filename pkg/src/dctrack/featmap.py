"""Dense feature-map substrate: convolution, ROI-align and pooling.

All values are float64. Boxes are ``(x1, y1, x2, y2)`` in input-image pixels.
"""
from dataclasses import dataclass
from math import erf, pi, sqrt

import numpy as np

from . import kernels
from .errors import InvalidBoxError, ShapeError

ENGINE_STRIDES = (4, 8, 16, 32)


@dataclass(frozen=True)
class KernelSpec:
    in_channels: int
    out_channels: int
    kernel_w: int = 1
    kernel_h: int = 1

    def __post_init__(self):
        for name in ("in_channels", "out_channels", "kernel_w", "kernel_h"):
            if int(getattr(self, name)) < 1:
                raise ShapeError(f"{name} must be >= 1")

    @property
    def weight_count(self):
        return self.in_channels * self.out_channels * self.kernel_w * self.kernel_h

    @property
    def param_count(self):
        return (self.in_channels * self.kernel_w * self.kernel_h + 1) * self.out_channels


class FeatureMap:
    """A ``C x H x W`` activation tensor tied to an image-space stride."""

    __slots__ = ("_data", "stride")

    def __init__(self, data, stride=1):
        arr = np.array(data, dtype=np.float64, copy=True)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3:
            raise ShapeError(f"feature map must be C x H x W, got shape {arr.shape}")
        if arr.size == 0:
            raise ShapeError("feature map is empty")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature map contains non-finite values")
        if int(stride) < 1:
            raise ShapeError("stride must be >= 1")
        arr.setflags(write=False)
        self._data = arr
        self.stride = int(stride)

    @classmethod
    def from_flat(cls, flat, channels, height, width, stride=1):
        flat = np.asarray(flat, dtype=np.float64).ravel()
        if flat.size != channels * height * width:
            raise ShapeError(
                f"data length {flat.size} != {channels}x{height}x{width}"
            )
        return cls(flat.reshape(channels, height, width), stride)

    @property
    def data(self):
        return self._data

    @property
    def channels(self):
        return self._data.shape[0]

    @property
    def height(self):
        return self._data.shape[1]

    @property
    def width(self):
        return self._data.shape[2]

    @property
    def shape(self):
        return self._data.shape

    def flat(self):
        return self._data.ravel()

    def select(self, channels):
        """New map holding a subset (or reordering) of channels."""
        return FeatureMap(self._data[list(channels)], self.stride)

    def __repr__(self):
        return f"FeatureMap(C={self.channels}, H={self.height}, W={self.width}, stride={self.stride})"


def conv(fmap, weights, bias, spec):
    """Cross-correlate ``fmap`` with a (possibly flat) weight bank.

    Kernels of odd size use zero 'same' padding, so output H x W matches the
    input. 1x1 kernels go through a matrix product.
    """
    if fmap.channels != spec.in_channels:
        raise ShapeError(
            f"map has {fmap.channels} channels, kernel expects {spec.in_channels}"
        )
    weights = np.asarray(weights, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64).ravel()
    if weights.size != spec.weight_count:
        raise ShapeError(f"weights length {weights.size} != {spec.weight_count}")
    if bias.size != spec.out_channels:
        raise ShapeError(f"bias length {bias.size} != {spec.out_channels}")
    if spec.kernel_h % 2 == 0 or spec.kernel_w % 2 == 0:
        raise ShapeError("only odd kernel sizes are supported")
    w = weights.reshape(spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w)
    if spec.kernel_h == 1 and spec.kernel_w == 1:
        out = np.tensordot(w[:, :, 0, 0], fmap.data, axes=(1, 0)) + bias[:, None, None]
    else:
        out = kernels.conv2d(fmap.data, w, bias)
    return FeatureMap(out, fmap.stride)


def conv1x1(fmap, weight_matrix, bias=None):
    """Convenience wrapper: ``weight_matrix`` is ``out x in``."""
    weight_matrix = np.asarray(weight_matrix, dtype=np.float64)
    out_c, in_c = weight_matrix.shape
    if bias is None:
        bias = np.zeros(out_c)
    return conv(fmap, weight_matrix, bias, KernelSpec(in_c, out_c))


def roi_align(fmap, box, out_size=7, samples_per_bin=2):
    """Crop ``box`` from ``fmap`` into an ``out_size x out_size`` grid.

    Sample points sit at regular sub-bin offsets; values live at cell centers
    (a pixel coordinate ``x`` reads cell index ``x / stride - 0.5``).
    Samples more than one cell outside the grid read 0.
    """
    x1, y1, x2, y2 = (float(v) for v in box)
    if not (x2 > x1 and y2 > y1) or not np.all(np.isfinite([x1, y1, x2, y2])):
        raise InvalidBoxError(f"degenerate box {box}")
    if out_size < 1 or samples_per_bin < 1:
        raise ShapeError("out_size and samples_per_bin must be >= 1")
    s = float(fmap.stride)
    cell_box = (x1 / s, y1 / s, x2 / s, y2 / s)
    out = kernels.roi_align(fmap.data, cell_box, out_size, samples_per_bin)
    return FeatureMap(out, fmap.stride)


def global_avg_pool(fmap):
    return fmap.data.mean(axis=(1, 2))


@dataclass(frozen=True)
class FeatureLayout:
    """Channel layout of the synthetic backbone maps.

    Channel 0 is objectness (peak 1 at an object center), then
    ``appearance_dim`` appearance channels (bump times the object's unit
    appearance pattern), then four box-side channels holding the
    location-to-side distances ``(l, t, r, b)`` of the dominant object in
    cell units. Bumps are Gaussian with std ``bump_sigma_fraction`` of the
    box size on each axis.
    """

    appearance_dim: int = 32
    bump_sigma_fraction: float = 1.0 / 6.0

    @property
    def channels(self):
        return 1 + self.appearance_dim + 4

    @property
    def objectness(self):
        return 0

    @property
    def appearance(self):
        return slice(1, 1 + self.appearance_dim)

    @property
    def box_sides(self):
        return slice(1 + self.appearance_dim, 5 + self.appearance_dim)

    @property
    def template_gain(self):
        """Inverse of the expected box-mean of the product bump.

        Pooling a bump over its own box gives ``k`` per unit pattern; scaling
        by ``1/k`` maps a perfect template match to 1.
        """
        half = 0.5 / self.bump_sigma_fraction  # box half-width in sigmas
        per_axis = sqrt(2.0 * pi) * erf(half / sqrt(2.0)) / (2.0 * half)
        return 1.0 / (per_axis * per_axis)
