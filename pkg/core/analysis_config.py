"""
analysis_config.py - Analysis Limits and Defaults

Central configuration for the bounded parts of the analysis: emulation caps,
call-graph depth and fan-out, chain enumeration, and the RPC environment variable.
"""

# ============================================================================
# DEFAULTS
# ============================================================================

DEPTH_LIMIT = 21             # deepest call chain observed in real attacks
FANOUT_CAP = 64              # resolved edges per call site context
VISIT_CAP = 8                # per-block revisits before widening to Top
DISTINCT_STATES = 8          # distinct entry states kept per block before joining
PATH_CAP = 256               # acyclic paths per function before joined fallback
STEP_BUDGET = 20000          # block executions per emulation run
MAX_CHAINS_PER_FUNCTION = 4096

RPC_URL_ENV = "REENTRYSCOPE_RPC_URL"
RPC_TIMEOUT = 30
RPC_ATTEMPTS = 2

SCHEMA_VERSION = 1


class AnalysisConfig:
    """
    Configuration for one analysis run.
    """

    def __init__(self, depth_limit=DEPTH_LIMIT, fanout_cap=FANOUT_CAP, visit_cap=VISIT_CAP,
                 distinct_states=DISTINCT_STATES, path_cap=PATH_CAP, step_budget=STEP_BUDGET,
                 max_chains=MAX_CHAINS_PER_FUNCTION):

        if depth_limit < 1:
            raise ValueError(f"depth_limit must be positive, got {depth_limit}")
        if fanout_cap < 1:
            raise ValueError(f"fanout_cap must be positive, got {fanout_cap}")

        self.depth_limit = depth_limit
        self.fanout_cap = fanout_cap
        self.visit_cap = visit_cap
        self.distinct_states = distinct_states
        self.path_cap = path_cap
        self.step_budget = step_budget
        self.max_chains = max_chains

    def to_dict(self):
        return {
            "depth_limit": self.depth_limit,
            "fanout_cap": self.fanout_cap,
            "visit_cap": self.visit_cap,
            "distinct_states": self.distinct_states,
            "path_cap": self.path_cap,
            "step_budget": self.step_budget,
            "max_chains": self.max_chains,
        }

    def __repr__(self):
        return f"AnalysisConfig({self.to_dict()})"


DEFAULT_CONFIG = AnalysisConfig()
