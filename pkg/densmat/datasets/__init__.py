from .generators import (
    Dataset,
    DatasetMeta,
    gen_mixture_1d,
    gen_spirals_2d,
    grid_1d,
    grid_2d,
    mixture_1d_pdf,
    spiral_points,
    uniform_box,
)
from .csv_io import load_csv, write_csv
from .preprocessing import MinMaxScaler, PcaProjection, fit_minmax, minmax_scale, pca_reduce, split

__all__ = [
    "Dataset",
    "DatasetMeta",
    "gen_mixture_1d",
    "gen_spirals_2d",
    "grid_1d",
    "grid_2d",
    "mixture_1d_pdf",
    "spiral_points",
    "uniform_box",
    "load_csv",
    "write_csv",
    "MinMaxScaler",
    "PcaProjection",
    "fit_minmax",
    "minmax_scale",
    "pca_reduce",
    "split",
]
