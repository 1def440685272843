"""Slice datasets: extraction from volumes, storage, splits, mean image."""
from .idx import import_idx, load_idx_pair
from .mean import MeanImage, compute_mean_image
from .slices import extract_slices, iter_slices, normalize_minmax, resize_bilinear
from .splits import SLICE, SUBJECT, Split, SplitSpec, split, split_indices, split_sizes
from .store import PIXEL_F32, PIXEL_U8, SliceImage, SliceRecordStore, subject_hash
from .synthetic import generate_synthetic

__all__ = [
    "MeanImage", "PIXEL_F32", "PIXEL_U8", "SLICE", "SUBJECT", "SliceImage",
    "SliceRecordStore", "Split", "SplitSpec", "compute_mean_image", "extract_slices",
    "generate_synthetic", "import_idx", "iter_slices", "load_idx_pair",
    "normalize_minmax", "resize_bilinear", "split", "split_indices", "split_sizes",
    "subject_hash",
]
