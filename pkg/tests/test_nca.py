import numpy as np
import pytest

from voxmaze import tasks
from voxmaze.level import Door, InitSpec, Tile, new_level
from voxmaze.nca import (
    GeneratorParams,
    NcaArchitecture,
    NcaError,
    arch_for_task,
    encode_nca_input,
    load_params,
    nca_forward,
    nca_step,
    param_count,
    rollout,
    rollout_batch,
    save_params,
)

DIAM = tasks.default_task_spec("diameter")
DOORS_SPEC = tasks.default_task_spec("doors")
DOOR_PAIR = (Door("x0", (0, 0, 3), "entrance"), Door("x1", (6, 0, 3), "exit"))


from oracles import naive_forward


def random_params(arch, seed=0, scale=0.5):
    rng = np.random.default_rng(seed)
    return GeneratorParams(arch, rng.normal(0, scale, param_count(arch)).astype(np.float32))


def test_param_counts_closed_form():
    assert param_count(NcaArchitecture(2, 2)) == 2882
    assert param_count(NcaArchitecture(1, 1)) == 1985
    # doubling hidden roughly doubles layer-1 parameters
    small = NcaArchitecture(2, 2, hidden=32)
    big = NcaArchitecture(2, 2, hidden=64)
    layer1 = lambda a: a.in_channels * 27 * a.hidden + a.hidden
    assert layer1(big) == 2 * layer1(small)


def test_arch_for_task_channels():
    assert arch_for_task(DIAM) == NcaArchitecture(2, 2)
    assert arch_for_task(DOORS_SPEC) == NcaArchitecture(6, 2)
    assert arch_for_task(tasks.default_task_spec("dungeon")) == NcaArchitecture(8, 4)


def test_theta_length_checked():
    with pytest.raises(NcaError):
        GeneratorParams(NcaArchitecture(2, 2), np.zeros(100, dtype=np.float32))


def test_zero_theta_gives_air():
    params = GeneratorParams(NcaArchitecture(2, 2), np.zeros(2882, dtype=np.float32))
    lv = new_level((5, 5, 5), InitSpec("uniform_random", 0.5, 3))
    out = nca_step(params, lv, DIAM)
    assert (out.tiles == int(Tile.AIR)).all()  # sigmoid(0) ties resolve to channel 0


def test_solid_bias_dominates():
    theta = np.zeros(2882, dtype=np.float32)
    theta[-1] = 8.0  # layer-3 bias of the SOLID channel
    params = GeneratorParams(NcaArchitecture(2, 2), theta)
    lv = new_level((5, 5, 5), InitSpec("uniform_random", 0.5, 3))
    out = nca_step(params, lv, DIAM)
    assert (out.tiles == int(Tile.SOLID)).all()


def test_encode_one_hot_and_door_channels():
    lv = new_level((7, 7, 7), InitSpec("uniform_random", 0.5, 1), DOOR_PAIR)
    x = encode_nca_input(lv, DOORS_SPEC)
    assert x.shape == (6, 7, 7, 7)
    assert np.array_equal(x[:2].sum(axis=0), np.ones((7, 7, 7)))
    assert x[2].sum() == 1 and x[2][0, 0, 3] == 1  # entrance foot marker
    assert x[3][0, 1, 3] == 1  # entrance head marker
    assert x[4][6, 0, 3] == 1 and x[5][6, 1, 3] == 1


def test_forward_matches_naive_loops():
    rng = np.random.default_rng(9)
    for trial in range(6):
        arch = NcaArchitecture(2, 2) if trial % 2 == 0 else NcaArchitecture(3, 3, hidden=8)
        params = random_params(arch, seed=trial)
        x = (rng.random((arch.in_channels, 4, 4, 4)) < 0.5).astype(np.float64)
        fast = nca_forward(params, x)
        slow = naive_forward(params, x)
        assert np.abs(fast - slow).max() < 1e-6


def test_forward_shape_checked():
    params = random_params(NcaArchitecture(2, 2))
    with pytest.raises(NcaError):
        nca_forward(params, np.zeros((3, 5, 5, 5)))


def test_locality_of_one_step():
    params = random_params(NcaArchitecture(2, 2), seed=5)
    rng = np.random.default_rng(0)
    x = (rng.random((2, 7, 7, 7)) < 0.5).astype(np.float64)
    base = nca_forward(params, x)
    x2 = x.copy()
    x2[:, 3, 3, 3] = 1 - x2[:, 3, 3, 3]
    changed = np.argwhere(np.any(nca_forward(params, x2) != base, axis=0))
    assert len(changed)
    assert (np.abs(changed - [3, 3, 3]).max(axis=1) <= 1).all()


def test_pointwise_network_is_permutation_equivariant():
    # zero all off-center layer-1 taps: the whole network acts per voxel,
    # so permuting voxels permutes outputs (the 1x1x1 layers add no mixing)
    arch = NcaArchitecture(2, 2, hidden=8)
    params = random_params(arch, seed=3)
    w1, b1, w2, b2, w3, b3 = params.layers()
    mask = np.zeros((3, 3, 3))
    mask[1, 1, 1] = 1.0
    w1_masked = w1 * mask
    theta = np.concatenate([
        w1_masked.ravel(), b1, w2.ravel(), b2, w3.ravel(), b3
    ]).astype(np.float32)
    params = GeneratorParams(arch, theta)
    rng = np.random.default_rng(4)
    x = rng.random((2, 4, 4, 4))
    perm = rng.permutation(4 * 4 * 4)
    x_perm = x.reshape(2, -1)[:, perm].reshape(2, 4, 4, 4)
    out = nca_forward(params, x).reshape(2, -1)[:, perm]
    out_perm = nca_forward(params, x_perm).reshape(2, -1)
    assert np.allclose(out, out_perm, atol=1e-12)


def test_rollout_basics():
    params = random_params(NcaArchitecture(2, 2), seed=8)
    lv = new_level((5, 5, 5), InitSpec("uniform_random", 0.5, 2))
    assert rollout(params, lv, DIAM, steps=0) == lv
    a = rollout(params, lv, DIAM, steps=10)
    b = rollout(params, lv, DIAM, steps=10)
    assert a == b


def test_rollout_matches_step_composition():
    for seed in (0, 1, 2):
        params = random_params(NcaArchitecture(2, 2), seed=seed)
        lv = new_level((5, 5, 5), InitSpec("uniform_random", 0.5, seed))
        current = lv
        for _ in range(10):
            current = nca_step(params, current, DIAM)
        assert rollout(params, lv, DIAM, steps=10) == current


def test_rollout_batch_matches_single():
    params = random_params(NcaArchitecture(2, 2), seed=10)
    levels = [new_level((5, 5, 5), InitSpec("uniform_random", 0.5, s)) for s in range(6)]
    batch = rollout_batch(params, levels, DIAM, steps=25)
    singles = [rollout(params, lv, DIAM, steps=25) for lv in levels]
    assert all(a == b for a, b in zip(batch, singles))


def test_attractor_rollout_equals_single_step():
    theta = np.zeros(2882, dtype=np.float32)
    theta[-1] = 8.0
    params = GeneratorParams(NcaArchitecture(2, 2), theta)
    lv = new_level((5, 5, 5), InitSpec("uniform_random", 0.5, 7))
    assert rollout(params, lv, DIAM, steps=50) == nca_step(params, lv, DIAM)


def test_doors_clamped_through_rollout():
    params = random_params(NcaArchitecture(6, 2), seed=11)
    lv = new_level((7, 7, 7), InitSpec("uniform_random", 0.5, 0), DOOR_PAIR)
    final = rollout(params, lv, DOORS_SPEC, steps=20)
    assert final.doors == DOOR_PAIR
    assert final.padded_tiles()[0, 1, 4] == int(Tile.AIR)  # entrance foot opening


def test_sigmoid_strictly_inside_unit_interval():
    # strict at the init scale; extreme logits saturate in float64, which
    # the argmax tie rule still handles deterministically
    params = random_params(NcaArchitecture(2, 2), seed=12, scale=0.5)
    x = (np.random.default_rng(0).random((2, 5, 5, 5)) < 0.5).astype(float)
    out = nca_forward(params, x)
    assert (out > 0).all() and (out < 1).all()


def test_params_file_round_trip(tmp_path):
    params = random_params(NcaArchitecture(6, 2, hidden=16), seed=13)
    path = tmp_path / "gen.nca"
    save_params(path, params, metadata={"task": "doors", "fitness": 0.5})
    loaded = load_params(path)
    assert loaded.arch == params.arch
    assert np.array_equal(loaded.theta, params.theta)
    sidecar = (tmp_path / "gen.nca.json").read_text()
    assert '"task": "doors"' in sidecar


def test_params_file_rejects_garbage(tmp_path):
    path = tmp_path / "bogus.nca"
    path.write_bytes(b"NOTNCA" + b"\x00" * 32)
    with pytest.raises(NcaError):
        load_params(path)
