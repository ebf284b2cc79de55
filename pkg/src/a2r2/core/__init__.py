from .types import A2R2Error, Instance, LatexDoc, RasterImage
from .tokenizer import detokenize, token_spans, tokenize_latex
from .config import (
    COT_SUFFIX,
    VALID_STRATEGIES,
    ConfigError,
    PromptTemplates,
    RenderOptions,
    RunConfig,
    dump_config,
    load_config,
)
from .dataset import Dataset, DatasetError, RecordLoadError, load_dataset, write_dataset
from .artifacts import (
    IterationRecord,
    instance_dir,
    read_rounds,
    read_summary,
    write_final,
    write_round,
    write_summary,
)

__all__ = [
    "A2R2Error",
    "COT_SUFFIX",
    "ConfigError",
    "Dataset",
    "DatasetError",
    "Instance",
    "IterationRecord",
    "LatexDoc",
    "PromptTemplates",
    "RasterImage",
    "RecordLoadError",
    "RenderOptions",
    "RunConfig",
    "VALID_STRATEGIES",
    "detokenize",
    "dump_config",
    "instance_dir",
    "load_config",
    "load_dataset",
    "read_rounds",
    "read_summary",
    "token_spans",
    "tokenize_latex",
    "write_dataset",
    "write_final",
    "write_round",
    "write_summary",
]
