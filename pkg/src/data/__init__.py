from src.data.datasets import DatasetMeta, RawDataset, convert_csv, load_dataset, save_dataset
from src.data.synthetic import PlantedEdge, SyntheticPattern, generate_synthetic
from src.data.windows import DatasetBundle, Scaler, WindowSplit, make_windows

__all__ = [
    "DatasetBundle",
    "DatasetMeta",
    "PlantedEdge",
    "RawDataset",
    "Scaler",
    "SyntheticPattern",
    "WindowSplit",
    "convert_csv",
    "generate_synthetic",
    "load_dataset",
    "make_windows",
    "save_dataset",
]
