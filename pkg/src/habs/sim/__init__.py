"""Executable operational semantics, trace extraction and monitoring."""

from .dynamics import (ClosedFormDynamics, ConstantDynamics, Dynamics,  # noqa: F401
                       ExpPoly, NumericDynamics, SolverError, first_time,
                       solve_ode)
from .evalexpr import EvalError, eval_bool, eval_expr  # noqa: F401
from .monitor import MonitorReport, Violation, check_run, monitor  # noqa: F401
from .runtime import (Config, DeterministicPolicy, Engine, Msg, Obj, Proc,  # noqa: F401
                      RandomPolicy, Run, RunError, SimConfig, run_program)
from .scenario import ScenarioError, ScriptEvent, parse_script  # noqa: F401
from .traces import (SuspensionSubtrace, Trace, all_subtraces,  # noqa: F401
                     extract_trace, suspension_subtraces)
