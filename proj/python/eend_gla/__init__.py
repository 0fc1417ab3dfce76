"""Global/local attractor speaker diarization with streaming buffers."""

import json as _json

from ._eend_gla import (
    ConfigError,
    DataError,
    count_by_eigenratio,
    count_confusion,
    count_speakers,
    der,
    diarization_loss,
    eigenvalues_desc,
    existence_loss,
    format_rttm,
    generate_scenario,
    matrix_correlation,
    pad_speakers,
    parse_rttm,
    posteriors,
    sampling_weights,
    scenario_reference,
    sigmoid,
    solve_permutation,
)
from ._eend_gla import run_scenario as _run_scenario


def run_scenario(scenario_json, config=None):
    """Diarize a generated scenario; returns (segments, report dict)."""
    segments, report = _run_scenario(scenario_json, _json.dumps(config or {}))
    return segments, _json.loads(report)


__all__ = [name for name in dir() if not name.startswith("_")]
