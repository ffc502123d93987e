"""Hybrid stochastic-deterministic minibatch proximal gradient solvers for
l2-regularized ERM, with SGD/SVRG-family baselines and an IFO-accounted
benchmark harness."""

from .baselines import (
    BaselineConfig,
    fgd_reference,
    fgd_solve,
    scsg_solve,
    sgd_solve,
    svrg_full_solve,
)
from .data import Dataset, SparseVector, dot, load_libsvm, save_libsvm, synthesize_redundant
from .generic import (
    GenericConfig,
    QuadraticModel,
    build_quadratic_model,
    hsdmpg_generic_solve,
    outer_tolerance,
)
from .losses import ErmProblem, LossModel, loss_curv, loss_grad, loss_value, make_loss
from .oracle import IfoCounter, SolverTrace, read_trace_csv, traces_equal
from .quadratic import (
    HsdmpgConfig,
    ProximalSubproblem,
    batch_schedule,
    build_subproblem,
    gamma_value,
    hsdmpg_quadratic_solve,
    inner_tolerance,
)
from .svrg import FiniteSumObjective, FixedEpochs, SvrgConfig, svrg_minimize
from .targets import EpochsTarget, GradNormTarget, IfoBudget, OuterIters, SuboptTarget

__version__ = "0.1.0"
