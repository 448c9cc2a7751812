"""Topological Kalman filtering on 2nd-order cell complexes.

Joint latent-state tracking and online parameter learning from streaming
partial observations over node/edge/face signals, with online identification
of unknown 2-cells, spectral diagnostics and a reproducible run harness.
"""

from .cellid import IdentificationReport, Snapshot, identify_cells, uncertainty_scores
from .checkpoint import load_checkpoint, save_checkpoint
from .ekf import (
    FilterState,
    RunReport,
    StepRecord,
    TkfEngine,
    correct,
    m_step,
    predict,
    run_tkf,
    step_loss,
)
from .errors import (
    CellKalmanError,
    ConfigError,
    DanglingIndex,
    DuplicateFace,
    InsufficientStream,
    MissingGroundTruth,
    NonClosedCycle,
    PoolOverflow,
    ShapeMismatch,
    SingularInnovation,
)
from .harness import (
    ObservationStream,
    RunConfig,
    apply_missing,
    builtin_complex,
    evaluate,
    generate_synthetic,
    load_stream_csv,
    random_filter_bank,
    save_stream_csv,
)
from .metrics import NmseAccumulator, confusion_metrics
from .model import (
    BlockTaps,
    FilterBank,
    ModelParams,
    ObservationMask,
    jacobian,
    observation_operator,
    predict_obs,
    process_cov,
    transition,
)
from .rff import RffMap, f_hat, f_hat_derivative, feature_map
from .spectral import (
    SpectralBasis,
    TopoOperators,
    build_operators,
    diagnostics,
    hodge_decompose,
    inverse_tft,
    spectral_basis,
    spectral_process_cov,
    tft,
)
from .topology import (
    CellComplex,
    build_complex,
    enumerate_candidate_cells,
    load_complex,
    masked_b2,
    save_complex,
)

__version__ = "0.1.0"
