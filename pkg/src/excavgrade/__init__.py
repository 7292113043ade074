"""Grade uncertainty of excavated material: buckets, trucks and dumps from a prior block model."""

from .blocks import Block, BlockModel, CovarianceModel, block_covariance, radius_neighbors
from .bucket import BucketEstimate, BucketEstimator, estimate_at_location, estimate_bucket
from .config import PipelineConfig, load_config
from .errors import (
    BucketOutsideModel,
    ConfigError,
    DataError,
    EstimationError,
    LoadError,
    NoSampledLocations,
    NumericalError,
    WindowError,
)
from .geometry import BucketShape, SampledLocation, intersection_fraction, sample_dig_locations, volume_fractions
from .gmm import GaussianMixture, GaussianMoment, cdf, moment_match, pdf
from .haul import (
    DumpEstimate,
    TruckEstimate,
    estimate_dump_correlated,
    estimate_dump_window,
    estimate_truck,
    simulate_truck_value,
)
from .io import load_inputs
from .pipeline import emit_plot_data, run_pipeline
from .records import DigEvent, HaulCycle
from .synth import (
    ScenarioSpec,
    generate_scenario,
    mc_oracle_bucket,
    mc_oracle_truck,
    reference_spec,
    replay_spec,
)

__version__ = "0.1.0"
