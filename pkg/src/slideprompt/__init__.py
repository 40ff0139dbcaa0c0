"""Point-prompt refinement pipeline for invasive-melanoma slide masks."""

from .errors import (
    FormatError,
    HandshakeError,
    PredictorTimeoutError,
    ProtocolError,
    SlidepromptError,
    TransportError,
    ValidationError,
)
from .evaluate import MetricEntry, MetricReport, compare_runs, iou_f1
from .fixtures import (
    ComponentRecipe,
    SplitMix64,
    SynthSpec,
    preset_spec,
    prompt_dataset,
    records_to_text,
    synth_slide,
)
from .formats import (
    load_mask,
    load_probmap,
    save_mask,
    save_plane,
    save_probmap,
)
from .geometry import BoxDims, Centroid, MinAreaBox, aabb, box_dims, centroid, min_area_bbox
from .pipeline import PipelineConfig, PipelineResult, RunManifest, paste, run_pipeline
from .postprocess import (
    PostprocessConfig,
    PostprocessReport,
    confidence_filter,
    detect_in_situ,
    postprocess_mask,
)
from .predictor import (
    MockOracleBackend,
    NoisyMockBackend,
    PatchSource,
    PredictorBackend,
    PredictRequest,
    PredictResponse,
)
from .prompting import PromptConfig, PromptPlan, decide_mode, grid_points, plan_prompts
from .raster import (
    BinaryMask,
    ComponentSet,
    LabelMask,
    ProbabilityMap,
    class_plane,
    connected_components,
    touches,
)
from .tiling import (
    PatchWindow,
    StitchAccumulator,
    centered_window,
    dataset_patches,
    gaussian_kernel,
    sliding_windows,
)
from .wire import WireBackend, connect_exec, connect_tcp, make_backend

__version__ = "0.1.0"
