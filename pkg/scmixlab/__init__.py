from .core import ImageTensor, LabelMap, OneHotLabel, WeightMap, one_hot_encode
from .rng import RngStream
from .synth import BenchmarkConfig, CompoundBenchmark, DomainSpec, make_compound_benchmark
from .mixing import MixParams, MixedSample, SourcePair, TargetTriple, classmix_single, scmix
from .model import LinearSegModel
from .trainer import TrainConfig, train
from .discrepancy import DomainSampleSet, ocda_bound_terms, proxy_hdh_distance
from .config import ExperimentConfig, parse_config
from .experiments import run_comparison, run_sweep
from ._types import Method, MixerKind

__version__ = "1.0.0"

__all__ = [
    'ImageTensor', 'LabelMap', 'OneHotLabel', 'WeightMap', 'one_hot_encode', 'RngStream',
    'BenchmarkConfig', 'CompoundBenchmark', 'DomainSpec', 'make_compound_benchmark',
    'MixParams', 'MixedSample', 'SourcePair', 'TargetTriple', 'classmix_single', 'scmix',
    'LinearSegModel', 'TrainConfig', 'train',
    'DomainSampleSet', 'ocda_bound_terms', 'proxy_hdh_distance',
    'ExperimentConfig', 'parse_config', 'run_comparison', 'run_sweep', 'Method', 'MixerKind',
]
