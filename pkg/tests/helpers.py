"""Shared oracles for the unit and acceptance tests."""

from typing import Callable, Dict, Tuple

import numpy as np

from morphparse.autodiff import backward
from morphparse.autodiff.gradcheck import numerical_gradient, relative_error
from morphparse.conllu import parse_conllu
from morphparse.extractors import WordVectors
from morphparse.model import DEFAULT_LOSS_WEIGHTS, JointModel, ModelConfig, total_loss
from morphparse.vocab import Vocabularies

THREE_TOKENS = """1\tDogs\tdog\tNOUN\tNNS\tNumber=Plur\t2\tnsubj\t_\t_
2\tbark\tbark\tVERB\tVBP\tMood=Ind|Tense=Pres\t0\troot\t_\t_
3\t.\t.\tPUNCT\t.\t_\t2\tpunct\t_\t_

"""

# below this magnitude central differences of the full loss are dominated by f64 rounding,
# so entries are compared on an absolute scale
FULL_MODEL_FLOOR = 1e-6


def three_token_model(config: ModelConfig = None) -> Tuple[JointModel, object]:
    """Model with every feature path that has trainable weights, plus the batch to score."""
    tb = parse_conllu(THREE_TOKENS.splitlines(keepends=True))
    vectors = WordVectors(["dogs", "bark"], np.random.default_rng(5).normal(size=(2, 6)))
    config = config or ModelConfig(features=["char", "word"])
    model = JointModel(config, Vocabularies.build(tb, min_char_freq=1), seed=0, vectors=vectors)
    return model, model.make_batch(tb.sentences)


def full_model_gradient_errors(model: JointModel, batch, coords_per_tensor: int = 3,
                               eps: float = 1e-5) -> Dict[str, float]:
    """Max relative error per parameter tensor, dropout active with a fixed mask."""

    def loss():
        out = model.forward(batch, train=True, rng=np.random.default_rng(123))
        return total_loss(model.losses(batch, out), DEFAULT_LOSS_WEIGHTS, model.config.targets)

    params = model.parameters()
    for p in params:
        p.grad = None
    backward(loss(), parameters=params)
    rng = np.random.default_rng(0)
    errors = {}
    for p in params:
        size = p.value.size
        picked = set(rng.choice(size, size=min(coords_per_tensor, size), replace=False).tolist())
        picked |= set(np.argsort(-np.abs(p.grad).ravel())[:coords_per_tensor].tolist())
        coords = [np.unravel_index(i, p.shape) for i in sorted(picked)]
        numeric = numerical_gradient(loss, p, eps=eps, coords=coords)
        analytic = np.array([p.grad[c] for c in coords])
        values = np.array([numeric[c] for c in coords])
        errors[p.name] = float(relative_error(analytic, values, floor=FULL_MODEL_FLOOR).max())
    return errors


def reaches_root(heads) -> bool:
    n = len(heads)
    for i in range(1, n + 1):
        node, steps = i, 0
        while node != 0 and steps <= n:
            node, steps = heads[node - 1], steps + 1
        if node != 0:
            return False
    return sum(h == 0 for h in heads) == 1


def run_until(trainer, done: Callable[[dict], bool], max_epochs: int):
    """Run epochs until ``done(metrics)`` holds or the schedule stops; returns the last record."""
    record = None
    while trainer.state.epoch < max_epochs and not trainer.state.stopped:
        record = trainer.run_epoch()
        if done(record.metrics):
            break
    return record


# (criterion, passed, detail) lines printed at the end of the pytest run
ACCEPTANCE = []


def report(criterion: str, passed: bool, detail: str) -> bool:
    line = f"{criterion}: {'PASS' if passed else 'FAIL'} {detail}"
    ACCEPTANCE.append(line)
    print(line, flush=True)
    return passed
