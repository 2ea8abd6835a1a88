from pathlib import Path

import numpy as np

from core.policy import DQNAgent

ROOT = Path(__file__).resolve().parent.parent
TOY_TABLE = ROOT / "data" / "toy_table.json"

TINY_TABLE = {
    "groups": [
        {
            "id": "g1",
            "diseases": {
                "flu": {"fever": 0.9, "cough": 0.6, "chills": 0.5},
                "cold": {"cough": 0.5, "sneezing": 0.8, "runny nose": 0.7},
            },
        },
        {
            "id": "g2",
            "diseases": {
                "migraine": {"headache": 0.9, "nausea": 0.5, "light sensitivity": 0.6},
                "gastro": {"nausea": 0.6, "diarrhea": 0.9, "vomiting": 0.5},
            },
        },
    ]
}


def force_action(agent: DQNAgent, index: int) -> None:
    """Make ``index`` the argmax for every input by zeroing the output weights."""
    params = agent.network.params
    params.weights[-1][:] = 0.0
    params.biases[-1][:] = 0.0
    params.biases[-1][index] = 10.0
    agent.sync_target()


def random_state_vector(rng: np.random.Generator, n_symptoms: int) -> np.ndarray:
    blocks = np.zeros((n_symptoms, 3))
    for position, choice in enumerate(rng.integers(0, 4, size=n_symptoms)):
        if choice < 3:
            blocks[position, choice] = 1.0
    return blocks.reshape(-1)
