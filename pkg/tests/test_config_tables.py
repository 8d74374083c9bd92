import hashlib

import numpy as np
import pytest

from mdiqkd import config, tables
from mdiqkd.forward import full_gain_table
from mdiqkd.model import Basis, GainTable, Intensity

# guards the transcribed measured tables against drift
CHECKSUMS = {
    "deployed_10.8uW.csv": "9678fc8a39c831bddc19299fa5e492212a63d2fd5bac2f7b45b89a479aec3b70",
    "deployed_26dB.csv": "beb46a4d78db0802af8389a1cf0fc8d18741ec2cf82ff518e1329204ebb39842",
    "deployed_35dB.csv": "bfd7dffea4c869e5842aa38553fb38b70d8fd6554c3a04b8e68d9505354aaa40",
    "deployed_44dB.csv": "5fdd6a74d19c080e3b39d2279b24bc5474922cc7c986b73ea4debde3a424a701",
    "lab_11.8uW.csv": "77a88816a304cf5723221a435d3f3e0d0f07bb892dba99be5ab28e7c551862a3",
    "lab_15.0uW.csv": "3db6d6866e84af96c39b224fe7a91bc9a82990f4ac52f1cd51dd971d58780b62",
    "lab_155uW.csv": "ebfbe29ff519c7ca4329c67e640bcc58105a445ee8edf19974a80666b921bf65",
    "lab_19dB.csv": "20f2ba1341dbb2c329477fcdb080ef3fb14d947834b6c2dc5d8a745e79bc5f7d",
    "lab_28dB.csv": "0e26bb09858f69838ba084b1d3e2c2837cb7c1a97040403c5e3bf98f12beabb2",
    "lab_35dB.csv": "16609a9f502b250cf864ea3e0fb8d6ab841fdd745c7961897c8d756a22d22417",
    "lab_392uW.csv": "cc77efc1ed1dd7c61d9571297fbfccd6628511c329d11a1397e95ce663d37be8",
    "lab_4.68uW.csv": "0a28f9342e7ba1c7d1b30f75ae442ddd9bc735fda0d8c4c86e180d0b04ceb11d",
    "lab_43dB.csv": "c0ba9b0c2f4891abcbbc6e16214333155f9c62033603da8c209925e3036c2474",
    "lab_48dB.csv": "5d5f0cb952cbe0a3d7e934c3f120103318b09e412cad365574e083fddbbcf196",
    "lab_61.7uW.csv": "590071bb88f2ef4fd801694a063bf08e8a1a2c8bd413af38200570c9992992b3",
}


def test_fixture_checksums():
    fx = tables.fixtures()
    assert sorted(f.file for f in fx.values()) == sorted(CHECKSUMS)
    for f in fx.values():
        digest = hashlib.sha256(tables.fixture_path(f.name).read_bytes()).hexdigest()
        assert digest == CHECKSUMS[f.file], f.name


@pytest.mark.parametrize(
    "name, basis, a, b, q, e",
    [
        ("lab_19dB", Basis.X, "s", "s", 4.94e-4, 0.295),
        ("lab_19dB", Basis.Z, "s", "s", 2.33e-4, 0.00927),
        ("lab_19dB", Basis.X, "v", "v", 1.08e-9, 0.5),
    ],
)
def test_fixture_cells(name, basis, a, b, q, e):
    t = tables.fixture(name).table()
    ia, ib = Intensity.from_label(a), Intensity.from_label(b)
    assert t.Q[basis, ia, ib] == q
    assert t.E[basis, ia, ib] == e


def test_fixture_keyrates():
    fx = tables.fixtures()
    assert fx["lab_19dB"].keyrate == 2.10e-7
    assert fx["lab_28dB"].keyrate == 3.79e-8
    assert fx["lab_35dB"].keyrate == 5.83e-9
    assert fx["deployed_26dB"].keyrate == 3.84e-8
    assert fx["lab_392uW"].keyrate == 1.02e-8
    assert fx["lab_155uW"].keyrate == 9.70e-8


def test_all_fixtures_parse_with_vacuum_convention():
    for f in tables.fixtures().values():
        t = f.table()
        assert np.all((t.Q >= 0) & (t.Q <= 1))
        assert t.E[Basis.Z, Intensity.VACUUM, Intensity.VACUUM] == 0.5
        assert t.E[Basis.X, Intensity.VACUUM, Intensity.VACUUM] == 0.5


def test_unknown_fixture():
    with pytest.raises(KeyError, match="unknown fixture"):
        tables.fixture("nope")


def test_table_round_trip_is_bit_identical(lab):
    t = full_gain_table(lab)
    text = tables.format_table(t)
    back = tables.parse_table(text)
    assert np.array_equal(back.Q, t.Q) and np.array_equal(back.E, t.E)
    assert tables.format_table(back) == text
    lines = text.splitlines()
    assert lines[0] == "basis,mu_a,mu_b,Q,E"
    assert len(lines) == 19


@pytest.mark.parametrize(
    "text, match",
    [
        ("a,b\n", "header"),
        ("basis,mu_a,mu_b,Q,E\nZ,s,s,0.1\n", ":2: expected 5 fields"),
        ("basis,mu_a,mu_b,Q,E\nZ,s,s,0.1,0.1\nZ,s,s,0.1,0.1\n", ":3: duplicate"),
        ("basis,mu_a,mu_b,Q,E\nY,s,s,0.1,0.1\n", ":2:"),
        ("basis,mu_a,mu_b,Q,E\nZ,s,s,abc,0.1\n", ":2:"),
        ("basis,mu_a,mu_b,Q,E\nZ,s,s,0.1,0.1\n", "missing 17 cells"),
    ],
)
def test_table_errors(text, match):
    with pytest.raises(tables.TableFormatError, match=match):
        tables.parse_table(text)


def test_sweep_round_trip():
    rows = [(19.0, 1e-6, 1e-6, 1e4), (55.0, -1e-9, 0.0, 1e4)]
    text = tables.format_sweep(rows)
    assert text.splitlines()[0] == "axis,R,R_clamped,noise_cps"
    assert tables.parse_sweep(text) == rows


@pytest.mark.parametrize("name", ["lab", "deployed"])
def test_config_round_trip(name):
    cfg = config.bundled(name)
    text = config.dumps(cfg)
    assert config.loads(text) == cfg
    assert config.dumps(config.loads(text)) == text


def test_config_units_are_converted():
    cfg = config.bundled("lab")
    assert cfg.scenario.detection.window == pytest.approx(400e-12)
    assert cfg.launch_power == pytest.approx(4.68e-6)
    assert cfg.noise.raman_slope == pytest.approx(6947.42e6)


@pytest.fixture
def lab_text():
    return config.dumps(config.bundled("lab"))


def _line_of(text, needle):
    return next(i for i, ln in enumerate(text.splitlines(), 1) if needle in ln)


@pytest.mark.parametrize(
    "old, new, needle, match",
    [
        ("visibility: 0.839079", "visibility: 1.5", "visibility:", "visibility must lie"),
        ("loss_db_bob: 9.0", "loss_db_bob: -1", "loss_db_bob", ">= 0 dB"),
        ("dark_cps: 2682.47", "dark_cps: abc", "dark_cps", "expected float"),
        ("dark_cps:", "dark_hz:", "dark_hz", "unknown key"),
        ("- 25.0", "- 12.0", "points_db", "strictly increasing"),
    ],
)
def test_config_error_lines(lab_text, old, new, needle, match):
    bad = lab_text.replace(old, new)
    assert bad != lab_text
    with pytest.raises(config.ConfigError, match=match) as info:
        config.loads(bad)
    # errors point at the offending key or its section header
    line = info.value.line
    assert line is not None
    header = bad.splitlines()[line - 1]
    assert line == _line_of(bad, needle) or (not header.startswith(" ") and header.endswith(":"))


def test_config_top_level_errors():
    with pytest.raises(config.ConfigError, match="line 1"):
        config.loads("alice: [1,")
    with pytest.raises(config.ConfigError, match="unknown section"):
        config.loads("foo: 1\n")
    with pytest.raises(config.ConfigError, match="missing required key"):
        config.loads("link: {loss_db_alice: 1, loss_db_bob: 1}\n")


def test_gain_table_rejects_out_of_range():
    Q = np.full((2, 3, 3), 0.1)
    E = np.full((2, 3, 3), 0.1)
    Q[0, 0, 0] = 1.5
    with pytest.raises(ValueError):
        GainTable(Q, E)
