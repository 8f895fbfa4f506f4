"""Radar people-counting toolkit: synthetic range-azimuth scenes,
std-map preprocessing, augmentation, a trainable count regressor with
transfer learning, and clustering separability metrics."""

from .core import (
    Dataset,
    NormalizationParams,
    RadarCube,
    SampleMeta,
    clip_and_normalize,
    read_cube,
    read_manifest,
    stratified_split,
    write_cube,
    write_manifest,
)
from .scenes import (
    EnvironmentSpec,
    PersonSpec,
    SceneConfig,
    generate_cube,
    make_environment_suite,
)
from .preprocess import (
    BackgroundModel,
    IirFilter,
    SigmoidParams,
    StdMap,
    TwoStageHighpass,
    WeightMap,
    apply_method,
    apply_weight,
    design_butterworth_bandpass,
    design_two_stage_highpass,
    filter_cube,
    fit_background,
    sigmoid_weight,
    sigmoid_weight_map,
    std_map,
    suppress_background,
    threshold_zero,
)
from .augment import AugmentSpec, augment_dataset, drop_and_interpolate, flip, random_scale
from .model import (
    CountModel,
    FeatureExtractor,
    OptimizerState,
    TrainConfig,
    extract_features,
    fine_tune,
    load_checkpoint,
    predict,
    predict_batch,
    save_checkpoint,
    train,
)
from .metrics import (
    KMeansResult,
    RegressionReport,
    SeparabilityReport,
    ami,
    expected_mutual_information,
    fisher_score,
    improvement_pct,
    kmeans,
    mutual_information,
    rmse_mae,
    separability_suite,
)

__version__ = "0.1.0"
