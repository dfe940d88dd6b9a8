import numpy as np
import pytest
import torch

import stain_trainer as st

PRODUCTION_PARAMS = 1_943_761


def learnable_floats(records):
    total = 0
    for name, arr in records.items():
        leaf = name.rsplit(".", 1)[1]
        if leaf not in ("mean", "var", "eps"):
            total += arr.size
    return total


def test_parameter_count_matches_inventory():
    model = st.ResidualUNet()
    torch_count = sum(p.numel() for p in model.parameters())
    assert torch_count == PRODUCTION_PARAMS
    records = st.expected_records(5, 16, 1, 1)
    inventory_count = sum(
        int(np.prod(shape))
        for name, shape in records.items()
        if name.rsplit(".", 1)[1] not in ("mean", "var", "eps")
    )
    assert inventory_count == torch_count


def test_export_matches_inventory_shapes():
    model = st.ResidualUNet(depth=3, base_filters=4)
    records = st.export_records(model)
    expected = st.expected_records(3, 4, 1, 1)
    assert list(records) == list(expected)
    for name, shape in expected.items():
        assert records[name].shape == shape, name


def test_export_import_forward_identical():
    torch.manual_seed(14)
    model = st.ResidualUNet(depth=3, base_filters=4)
    rebuilt = st.import_records(st.export_records(model))
    x = np.random.default_rng(0).uniform(0, 1, (48, 48)).astype(np.float32)
    a = st.predict(model, x, 0.0, 1.0)
    b = st.predict(rebuilt, x, 0.0, 1.0)
    assert np.array_equal(a, b)


def test_architecture_drift_names_first_record():
    model = st.ResidualUNet(depth=3, base_filters=4)
    model.head = torch.nn.Conv2d(4, 3, 1)  # wrong output width
    with pytest.raises(st.ExportError, match="head.weight"):
        st.export_records(model)


def test_zero_weights_give_identity():
    model = st.ResidualUNet(depth=3, base_filters=4)
    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, (torch.nn.Conv2d, torch.nn.ConvTranspose2d)):
                module.weight.zero_()
                module.bias.zero_()
    rng = np.random.default_rng(5)
    image = rng.uniform(-0.5, 1.5, (40, 56)).astype(np.float32)
    out = st.predict(model, image, -0.2, 1.2)
    assert np.array_equal(out, st.normalize(image, -0.2, 1.2))


def test_residual_constraint_enforced():
    with pytest.raises(ValueError, match="out_channels == in_channels"):
        st.ResidualUNet(in_channels=1, out_channels=2)
    with pytest.raises(ValueError, match="depth"):
        st.ResidualUNet(depth=1)


def test_normalize_bounds_checked():
    with pytest.raises(ValueError, match="rho_max > rho_min"):
        st.normalize(np.zeros((4, 4), np.float32), 1.0, 1.0)
