"""lensqc: recognition of image quality degradation in grayscale frames.

Pipeline: filter fields -> 20 statistical features -> RBF-kernel SVM.
"""

from .dataset import (
    CANONICAL_LABELS,
    EvalReport,
    FeatureCache,
    Manifest,
    ManifestEntry,
    SplitSpec,
    cache_features,
    evaluate,
    filter_by_camera,
    load_feature_cache,
    load_manifest,
    save_feature_cache,
    save_manifest,
    split,
)
from .degrade import DegradeSpec, apply_degradation, build_corpus, bundled_base_paths
from .features import (
    FEATURE_NAMES,
    N_FEATURES,
    Standardizer,
    extract_features,
    fit_standardizer,
    signed_moments,
)
from .filters import (
    FilterConfig,
    FilterFieldSet,
    GaussianKernel,
    compute_fields,
    gaussian_kernel,
    laplacian,
    local_contrast,
    local_mean,
    mean_subtracted,
    mscn,
    mscn_products,
)
from .image import load_image, save_gray_png, to_gray
from .svm import (
    BinarySvm,
    RbfParams,
    SvmModel,
    grid_search,
    load_model,
    predict_binary,
    rbf_kernel,
    rbf_kernel_matrix,
    save_model,
    train_binary,
    train_multiclass,
)

__version__ = "0.1.0"
