"""Optimal rigid alignment of 2D point sets.

Used to remove the global translation/rotation gauge freedom from a pose
estimate before measuring its error against ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import AlignmentError
from .validation import as_float_array

# Point sets whose largest centered coordinate is below this are treated
# as coincident: no rotation is defined for them.
_COINCIDENT_TOL = 1e-9


@dataclass(frozen=True)
class AlignmentResult:
    """Proper rigid transform mapping estimated points onto a reference set.

    ``aligned = estimated @ rotation.T + translation`` and ``rms_error``
    is the root-mean-square distance between aligned and reference points.
    """

    rotation_angle: float
    rotation: np.ndarray
    translation: np.ndarray
    aligned: np.ndarray
    rms_error: float


def kabsch_align(estimated, reference) -> AlignmentResult:
    """Find the rotation + translation minimizing RMS distance to ``reference``.

    Both inputs are (n, 2) arrays of matching points, n >= 2.  The
    recovered rotation is always proper (determinant +1); a reflection is
    never returned even when it would fit better.

    Raises
    ------
    AlignmentError
        If either point set is degenerate (all points coincident).
    """
    est = as_float_array("estimated", estimated, shape=(None, 2), min_rows=2)
    ref = as_float_array("reference", reference, shape=(None, 2), min_rows=2)
    if est.shape != ref.shape:
        raise ValueError(
            f"point sets must match in shape, got {est.shape} and {ref.shape}"
        )
    est_centroid = est.mean(axis=0)
    ref_centroid = ref.mean(axis=0)
    est_centered = est - est_centroid
    ref_centered = ref - ref_centroid
    if (
        np.max(np.abs(est_centered)) < _COINCIDENT_TOL
        or np.max(np.abs(ref_centered)) < _COINCIDENT_TOL
    ):
        raise AlignmentError("all points coincide; rotation is undefined")

    # Cross-covariance of the centered sets; SVD gives the optimal proper
    # rotation after forcing determinant +1.
    cross = est_centered.T @ ref_centered
    u, _, vt = np.linalg.svd(cross)
    det_sign = math.copysign(1.0, float(np.linalg.det(vt.T @ u.T)))
    rotation = vt.T @ np.diag([1.0, det_sign]) @ u.T
    angle = math.atan2(rotation[1, 0], rotation[0, 0])
    translation = ref_centroid - rotation @ est_centroid
    aligned = est @ rotation.T + translation
    rms = float(np.sqrt(np.mean(np.sum((aligned - ref) ** 2, axis=1))))
    return AlignmentResult(angle, rotation, translation, aligned, rms)


class RigidAlignment(TransformerMixin, BaseEstimator):
    """Scikit-learn style transformer around :func:`kabsch_align`.

    ``fit(X, Y)`` learns the proper rigid transform taking point set ``X``
    onto ``Y``; ``transform`` applies it to new points.

    Attributes
    ----------
    rotation_ : ndarray, shape (2, 2)
    rotation_angle_ : float
    translation_ : ndarray, shape (2,)
    rms_ : float
        RMS alignment error on the training pair.
    """

    def fit(self, X, y=None):
        if y is None:
            raise ValueError("RigidAlignment.fit requires a reference point set y")
        result = kabsch_align(X, y)
        self.rotation_ = result.rotation
        self.rotation_angle_ = result.rotation_angle
        self.translation_ = result.translation
        self.rms_ = result.rms_error
        return self

    def transform(self, X):
        check_is_fitted(self, "rotation_")
        pts = as_float_array("X", X, shape=(None, 2))
        return pts @ self.rotation_.T + self.translation_

    def fit_transform(self, X, y=None, **fit_params):
        self.fit(X, y)
        return self.transform(X)
