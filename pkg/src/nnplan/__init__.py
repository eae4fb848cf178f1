"""Planning with learned ReLU transition models: MILP compilation and gradient planning."""

from nnplan.compile import (Bounds, CompileError, InfeasibleProblem, PreprocessBudget,
                            compile_base, compile_strengthened, plan_milp, preprocess_bounds)
from nnplan.dataset import Dataset
from nnplan.gradplan import GradConfig, plan_gradient
from nnplan.network import Network, fold_standardization, forward, init_network
from nnplan.plan import PlanResult
from nnplan.problem import Constraint, LinExpr, PlanningProblem, PwlExpr, VarDecl
from nnplan.training import TrainConfig, train

__version__ = "0.1.0"

__all__ = ["Bounds", "CompileError", "Constraint", "Dataset", "GradConfig", "InfeasibleProblem",
           "LinExpr", "Network", "PlanResult", "PlanningProblem", "PreprocessBudget", "PwlExpr",
           "TrainConfig", "VarDecl", "compile_base", "compile_strengthened",
           "fold_standardization", "forward", "init_network", "plan_gradient", "plan_milp",
           "preprocess_bounds", "train"]
