"""Training side of the digital staining workflow.

Fits the residual U-Net on phase/fluorescence pairs and exports weights
in the PICSW1 container the inference engine loads. The two sides share
only file formats, never code.
"""

from .data import (
    MANIFEST_COLUMNS,
    Pair,
    read_pair_files,
    toy_pairs,
    toy_stain,
    write_pair_files,
)
from .formats import (
    FormatError,
    load_raster,
    load_weight_records,
    save_raster,
    save_weight_records,
)
from .model import (
    ExportError,
    ResidualUNet,
    expected_records,
    export_records,
    import_records,
    normalize,
    predict,
)
from .training import (
    TrainConfig,
    evaluate_pearson,
    run_kfold,
    save_run,
    summarize_kfold,
    train,
)

__all__ = [
    "MANIFEST_COLUMNS",
    "Pair",
    "read_pair_files",
    "toy_pairs",
    "toy_stain",
    "write_pair_files",
    "FormatError",
    "load_raster",
    "load_weight_records",
    "save_raster",
    "save_weight_records",
    "ExportError",
    "ResidualUNet",
    "expected_records",
    "export_records",
    "import_records",
    "normalize",
    "predict",
    "TrainConfig",
    "evaluate_pearson",
    "run_kfold",
    "save_run",
    "summarize_kfold",
    "train",
]
