import pytest

import stain_trainer as st

TOY_SEED = 11


@pytest.fixture(scope="session")
def toy_run():
    """One full-size training run on the analytic stain task.

    Shared across test modules because the 50-epoch fit of the
    production architecture dominates suite runtime.
    """
    pairs = st.toy_pairs({"train": 40, "validation": 6, "test": 6}, size=64,
                         seed=TOY_SEED)
    cfg = st.TrainConfig()
    model, curves = st.train(pairs, cfg)
    return {"pairs": pairs, "cfg": cfg, "model": model, "curves": curves}
