"""
Trajectory Replay
Human-readable rendering of one logged episode
"""

from typing import List

import pandas as pd

from agents.state import Trajectory

RULE = '-' * 72


def steps_table(trajectory: Trajectory) -> pd.DataFrame:
    rows = []
    for step in trajectory.steps:
        rewards = step.reward_breakdown
        rows.append({
            'step': step.iteration,
            'origin': step.query.origin,
            'route': step.top_action.route,
            'control': step.top_action.control + (' (forced)' if step.top_action.forced else ''),
            'malformed': step.top_action.malformed,
            'meta_paths': ','.join(str(i) for i in step.selection.correct) if step.selection else '',
            'items': len(step.provenance),
            'log_prob': step.action_log_prob,
            'value': step.value_estimate,
            'r_path': rewards.r_path,
            'r_rel': rewards.r_rel,
            'r_all': rewards.r_all,
        })
    return pd.DataFrame(rows)


def render_replay(trajectory: Trajectory, show_prompts: bool = False) -> str:
    """Episode header, a step table, then per-step detail."""
    lines: List[str] = [
        f"Episode {trajectory.episode_id}  [{trajectory.status}]",
        f"Task {trajectory.task.kind}  patient {trajectory.patient_id}  seed {trajectory.seed}",
        f"Prediction: {trajectory.final_prediction.value if trajectory.final_prediction else '-'}"
        f"  gold: {trajectory.gold.value if trajectory.gold else '-'}"
        f"  answer format ok: {trajectory.answer_format}",
    ]
    if trajectory.error:
        lines.append(f"Error: {trajectory.error_code}: {trajectory.error}")
    lines.append(RULE)

    table = steps_table(trajectory)
    lines.append(table.to_string(index=False) if not table.empty else '(no steps)')

    for step in trajectory.steps:
        lines.append(RULE)
        lines.append(f"Step {step.iteration} ({step.query.origin}): {step.query.text}")
        if step.selection is not None:
            lines.append(f"  selection: correct={step.selection.correct} "
                         f"erroneous={step.selection.erroneous} repeated={step.selection.repeated}")
        for entry in step.provenance:
            lines.append(f"  [{entry.kind} mp={entry.meta_path} score={entry.score:.4f}] {entry.key}")
        lines.append(f"  answer: {step.intermediate_answer}")
        lines.append("  rewards: " + ', '.join(
            f"{name}={value}" for name, value in step.reward_breakdown.model_dump().items()
        ))
        if show_prompts:
            for call in step.llm_calls:
                lines.append(f"  >> {call.tag} (log_prob={call.log_prob})")
                lines.extend('     ' + line for line in call.prompt.splitlines())
                lines.append(f"  << {call.response}")
    return '\n'.join(lines)
