"""Covariance-free Bayesian learning for simultaneously sparse MIMO
clutter-channel estimation, with structured-sparsity variants, matching
pursuit / FOCUSS baselines, Bayesian Cramér-Rao bounds, and a seeded
experiment harness."""

from .baselines import mfocuss, somp
from .bounds import BcrbResult, bcrb, bcrb_sweep, nmse
from .linalg import (
    CgReport,
    LinearOperator,
    ProbeMatrix,
    apply_normal_operator,
    cg_solve,
    estimate_diagonal,
    normal_operator,
    rademacher_probes,
)
from .model import (
    ConvolutionDictionary,
    RadarConfig,
    Waveform,
    build_block,
    build_dictionary,
    gen_lfm,
)
from .scene import (
    GROUP,
    JOINT,
    JOINT_GROUP,
    ROW,
    CcirMatrix,
    MeasurementSet,
    SparsityModel,
    evolve_scene,
    load_scene,
    perturb_support,
    save_scene,
    simulate,
    structure_ok,
    synth_ccir,
    synth_gaussian_ccir,
)
from .sbl import (
    COVFREE,
    FULL,
    EmTrace,
    HyperparamState,
    ModelDims,
    PosteriorEstimate,
    auto_select_model,
    estep_covfree,
    estep_full,
    init_state,
    log_evidence,
    mstep_group,
    mstep_joint,
    mstep_jointgroup,
    mstep_row,
    n_hyperparams,
    run_em,
)

__version__ = "0.1.0"
