"""Statistical features: signed moments of the filter fields, plus standardization.

Each field contributes the first and second moments of its non-negative
and negative values, every moment normalized by the field's *total*
element count (not the per-sign count). Zero belongs to the non-negative
side. The intensity and contrast fields are non-negative by construction
and contribute only their non-negative moments, giving 20 features:

    index  field       moment
    0-1    intensity   mu_pos, v_pos
    2-5    mean_sub    mu_pos, v_pos, mu_neg, v_neg
    6-7    contrast    mu_pos, v_pos
    8-11   laplacian   mu_pos, v_pos, mu_neg, v_neg
    12-15  mscn        mu_pos, v_pos, mu_neg, v_neg
    16-19  mscn_prod   mu_pos, v_pos, mu_neg, v_neg

This order is part of the model file format; loading rejects any model
or feature cache whose recorded order differs.
"""

import numpy as np

from .errors import EmptyFieldError, InsufficientDataError, NotFittedError

N_FEATURES = 20

_SIGNED_FIELDS = ("mean_sub", "laplacian", "mscn", "mscn_prod")
_NONNEG_FIELDS = ("intensity", "contrast")
_FIELD_ORDER = ("intensity", "mean_sub", "contrast", "laplacian", "mscn", "mscn_prod")

FEATURE_NAMES = tuple(
    f"{name}_{moment}"
    for name in _FIELD_ORDER
    for moment in (
        ("mu_pos", "v_pos") if name in _NONNEG_FIELDS else ("mu_pos", "v_pos", "mu_neg", "v_neg")
    )
)
assert len(FEATURE_NAMES) == N_FEATURES


def signed_moments(field, denom=None):
    """First/second moments of the non-negative and negative values.

    Sums are restricted by sign but normalized by ``denom`` (defaults to
    the total element count), so the two first moments always satisfy
    mu_pos + mu_neg = (raw sum) / denom. Returns
    (mu_pos, v_pos, mu_neg, v_neg); an empty sign side yields 0 for both
    of its moments.
    """
    values = np.asarray(field, dtype=np.float64).ravel()
    if values.size == 0:
        raise EmptyFieldError("cannot take moments of an empty field")
    if denom is None:
        denom = values.size
    if denom <= 0:
        raise EmptyFieldError(f"denominator must be positive, got {denom}")

    pos = values[values >= 0.0]
    neg = values[values < 0.0]
    mu_pos = pos.sum() / denom
    v_pos = np.square(pos - mu_pos).sum() / denom
    mu_neg = neg.sum() / denom
    v_neg = np.square(neg - mu_neg).sum() / denom
    return mu_pos, v_pos, mu_neg, v_neg


def extract_features(fields):
    """Reduce a FilterFieldSet to the 20-element feature vector.

    Each field is normalized by its own element count; for the product
    field that is H*(W-1).
    """
    arrays = fields.as_dict()
    out = np.empty(N_FEATURES, dtype=np.float64)
    pos = 0
    for name in _FIELD_ORDER:
        mu_pos, v_pos, mu_neg, v_neg = signed_moments(arrays[name])
        out[pos] = mu_pos
        out[pos + 1] = v_pos
        pos += 2
        if name in _SIGNED_FIELDS:
            out[pos] = mu_neg
            out[pos + 1] = v_neg
            pos += 2
    return out


class Standardizer:
    """Per-dimension mean removal and scaling to unit variance.

    Fitted on training data only. Uses the population standard deviation;
    zero-variance dimensions get scale 1 so they center to 0 without a
    division by zero.
    """

    def __init__(self, mean=None, scale=None):
        self.mean = None if mean is None else np.asarray(mean, dtype=np.float64)
        self.scale = None if scale is None else np.asarray(scale, dtype=np.float64)

    @property
    def fitted(self):
        return self.mean is not None and self.scale is not None

    def fit(self, features):
        X = np.asarray(features, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] < 2:
            raise InsufficientDataError(
                f"need at least 2 feature vectors to fit, got shape {X.shape}"
            )
        self.mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0.0] = 1.0
        self.scale = scale
        return self

    def transform(self, features):
        if not self.fitted:
            raise NotFittedError("standardizer has not been fitted")
        return (np.asarray(features, dtype=np.float64) - self.mean) / self.scale

    def inverse_transform(self, features):
        if not self.fitted:
            raise NotFittedError("standardizer has not been fitted")
        return np.asarray(features, dtype=np.float64) * self.scale + self.mean


def fit_standardizer(features):
    """Convenience wrapper: fit a Standardizer on a stack of feature vectors."""
    return Standardizer().fit(features)
