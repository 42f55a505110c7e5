"""Route preference instances between human and LM annotators.

Thin wrapper over the compiled ``_prefroute`` extension: dataset handling,
tagging, candidate sampling, performance prediction models, routing
strategies, and the synthetic-oracle evaluation harness.
"""

import json as _json

try:
    from ._prefroute import *  # noqa: F401,F403
    from ._prefroute import __version__, run_end_to_end_json as _run_end_to_end_json
except ImportError:  # build-tree layout: extension next to the package
    from _prefroute import *  # noqa: F401,F403
    from _prefroute import __version__, run_end_to_end_json as _run_end_to_end_json


def run_end_to_end(config=None):
    """Run the synthetic-oracle harness; returns the evaluation report as a dict.

    ``config`` mirrors the CLI harness-config JSON; omitted keys use the
    defaults (1000 instances, 30 tag dimensions, quadratic oracle, 200 train /
    16 holdout candidates, budgets 25/50/75%).
    """
    return _json.loads(_run_end_to_end_json(_json.dumps(config or {})))
