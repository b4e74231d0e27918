from .dataset import LabeledDataset, load_dataset, save_dataset
from .alignment import SA_METHODS, align
from .metrics import macro_f1

__all__ = ["LabeledDataset", "load_dataset", "save_dataset", "SA_METHODS", "align", "macro_f1"]
