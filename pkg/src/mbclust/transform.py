"""Data transformations applied before hierarchical agglomeration.

Every kind except RAW returns centred features. Kinds built on an SVD
(SPH, PCS, PCR, SVD) depend on the data only through rotation-invariant
quantities, so permuting the input columns changes at most the signs of the
output columns.

=====  ==========================  ===========================
kind   features                    covariance of the features
=====  ==========================  ===========================
RAW    X                           --
STD    Xc S^-1/2                   correlation matrix of X
SPH    U sqrt(n)                   I
PCS    U D                         diag(d_i^2 / n)
PCR    U* D*                       diag(d*_i^2 / n)
SVD    U* D*^1/2                   diag(d*_i / n)
=====  ==========================  ===========================

``U, D`` come from the SVD of the centred data and ``U*, D*`` from the SVD
of the centred data scaled to unit variances.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .data import DataMatrix, center_decompose, scale_decompose


class TransformKind(str, enum.Enum):
    RAW = "raw"
    STD = "std"
    SPH = "sph"
    PCS = "pcs"
    PCR = "pcr"
    SVD = "svd"

    @classmethod
    def parse(cls, value: "str | TransformKind") -> "TransformKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(
                f"unknown transform {value!r}; expected one of {[k.value for k in cls]}"
            ) from None


@dataclass(frozen=True)
class TransformedData:
    z: np.ndarray
    kind: TransformKind
    source: DataMatrix

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def q(self) -> int:
        return self.z.shape[1]


def apply_transform(x: DataMatrix, kind: TransformKind | str) -> TransformedData:
    """Project ``x`` into the feature space used to build the merge tree.

    On rank-deficient data SPH, PCS, PCR and SVD keep only the ``r`` retained
    singular directions, so the output has ``r < p`` columns.
    """
    kind = TransformKind.parse(kind)
    n = x.n
    if kind is TransformKind.RAW:
        z = x.values.copy()
    elif kind is TransformKind.STD:
        z = scale_decompose(x).centered.copy()
    elif kind is TransformKind.SPH:
        dec = center_decompose(x)
        z = dec.left_vectors * np.sqrt(n)
    elif kind is TransformKind.PCS:
        dec = center_decompose(x)
        z = dec.left_vectors * dec.singular_values
    elif kind is TransformKind.PCR:
        dec = scale_decompose(x)
        z = dec.left_vectors * dec.singular_values
    else:
        dec = scale_decompose(x)
        z = dec.left_vectors * np.sqrt(dec.singular_values)
    z = np.ascontiguousarray(z, dtype=np.float64)
    z.setflags(write=False)
    return TransformedData(z, kind, x)
