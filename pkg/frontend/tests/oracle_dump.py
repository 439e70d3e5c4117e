"""E2E oracle: direct sequential stepping, independent of frame caching.

Reads the session's seed from the exported record log, replays the given
per-frame action list through the environment exactly as an undisturbed
server would, and prints one JSON row per step.

Usage: python3 oracle_dump.py DATA_DIR EXPERIMENT_ID SESSION_ID ACTIONS_JSON_FILE STAGE_INDEX
"""

import json
import sys

from prestep.envs import get_env
from prestep.logstore import iter_records, scan_log
from prestep.records import SessionStartRecord
from prestep.sessions import reset_rng, step_rng
from prestep.stages import definition_from_yaml

from run_server import EXPERIMENT


def main() -> None:
    data_dir, experiment_id, session_id, actions_file, stage_index_s = sys.argv[1:6]
    stage_index = int(stage_index_s)
    actions = json.loads(open(actions_file).read())
    definition = definition_from_yaml(EXPERIMENT)
    assert definition.experiment_id == experiment_id

    payloads = scan_log(f"{data_dir}/{experiment_id}.log").payloads
    seed = next(
        r.seed for r in iter_records(payloads)
        if isinstance(r, SessionStartRecord) and r.session_id == session_id
    )
    stage = definition.stages[stage_index]
    env = get_env(stage.env_kind)
    rule = stage.completion

    episode = 0
    successes = 0
    step_in_ep = 0
    episode_return = 0.0
    state, _ = env.reset(stage.params, reset_rng(seed, stage_index, episode))
    rows = []
    for action in actions:
        result = env.step(state, action, stage.params, step_rng(seed, stage_index, episode, step_in_ep))
        state = result.state
        episode_return += result.reward
        rows.append({
            "episode": episode,
            "step": step_in_ep,
            "grid": [list(r) for r in result.observation.grid],
            "reward": result.reward,
            "done": result.done,
        })
        step_in_ep += 1
        if result.done:
            if episode_return >= rule.success_return_threshold:
                successes += 1
            episode += 1
            step_in_ep = 0
            episode_return = 0.0
            if successes >= rule.min_successes or episode >= rule.max_episodes:
                break
            state, _ = env.reset(stage.params, reset_rng(seed, stage_index, episode))
    print(json.dumps(rows))


if __name__ == "__main__":
    main()
