"""a2r2: iterative render-compare-refine conversion of formula images to LaTeX.

The package couples a vision-language backend with a LaTeX rendering
toolchain. A hypothesis transcription is rendered, visually compared with
the input image, the reported differences are verified against
attention-localized crops, and the hypothesis is refined. Evaluation
utilities (textual and visual similarity metrics) and a dataset difficulty
curation pipeline round out the toolkit.
"""

from .core.types import A2R2Error, Instance, LatexDoc, RasterImage

__version__ = "0.1.0"

__all__ = ["A2R2Error", "Instance", "LatexDoc", "RasterImage", "__version__"]
