from .dataset import Dataset, LabelHistogram, write_manifest
from .idx import IDXFormatError, load_idx, read_idx, save_idx, write_idx
from .longtail import UnreachableImbalance, long_tail, long_tail_counts
from .sampler import SamplerState, make_sampler, next_batch, refresh_pseudo_pools
from .synthetic import SyntheticSpec, make_synthetic_pair

__all__ = [
    "Dataset", "IDXFormatError", "LabelHistogram", "SamplerState", "SyntheticSpec",
    "UnreachableImbalance", "load_idx", "long_tail", "long_tail_counts", "make_sampler",
    "make_synthetic_pair", "next_batch", "read_idx", "refresh_pseudo_pools", "save_idx",
    "write_idx", "write_manifest",
]
