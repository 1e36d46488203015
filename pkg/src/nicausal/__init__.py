"""Causal structure learning for mixed linear and non-invertible nonlinear SEMs."""

from .bivariate import TestConfig, bivariate_discover
from .data import DataError, Dataset, EdgeVerdict, GraphError, Pdag, parse_edgelist, format_edgelist, read_csv, write_csv
from .direction import DirectionTest, direction_test
from .graphops import OrientationLog, dag_to_cpdag, meek_close, pdag_to_dag
from .metrics import GraphScore, holdout_loglik, jaccard, score, shd, tp_fp
from .nncl import Pipeline, consensus, nncl_orient, outside_search
from .pc import pc_learn
from .piecewise import FitInfeasibleError, PiecewiseFit, QuantileGrid, fit_direction
from .simulate import SemSpec, assign_nonlinear, builtin_graph, ground_truth, simulate
from .stats import RngStream, ci_test

__version__ = "0.1.0"
