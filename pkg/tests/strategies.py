import hypothesis.strategies as st
import numpy as np

from dvfs_energy import model


def make_model(cc_b, asym, beta, gamma, eta, m1, m2, p_system=0.0, freq_range=(0.2, 1.6)):
    return model.EnergyModel(
        model.TimeModelParams(cc_b, asym**beta, beta),
        model.PowerModelParams(p_system, gamma, eta),
        model.LinearVF(m1, m2),
        freq_range,
    )


@st.composite
def energy_models(draw):
    return make_model(
        cc_b=draw(st.floats(0.5, 5.0)),
        asym=draw(st.floats(0.05, 0.18)),
        beta=draw(st.floats(0.8, 1.6)),
        gamma=draw(st.floats(0.0, 0.8)),
        eta=draw(st.floats(0.2, 2.0)),
        m1=draw(st.floats(0.0, 0.5)),
        m2=draw(st.floats(0.6, 1.0)),
    )


def random_models(n, seed):
    rng = np.random.default_rng(seed)
    return [
        make_model(
            cc_b=rng.uniform(0.5, 5.0),
            asym=rng.uniform(0.05, 0.18),
            beta=rng.uniform(0.8, 1.6),
            gamma=rng.uniform(0.0, 0.8),
            eta=rng.uniform(0.2, 2.0),
            m1=rng.uniform(0.0, 0.5),
            m2=rng.uniform(0.6, 1.0),
        )
        for _ in range(n)
    ]
