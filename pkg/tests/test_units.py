import pytest

from excitonwalk.units import DIMENSIONLESS, PHYSICAL, UnitSystem, get_units


def test_hbar_six_figures():
    assert f"{PHYSICAL.hbar:.6g}" == "5308.84"


def test_boltzmann_six_figures():
    assert f"{PHYSICAL.kB:.6g}" == "0.695035"


def test_one_inverse_picosecond_is_5_3_wavenumbers():
    assert round(PHYSICAL.rate_to_energy(1e-3), 1) == 5.3


def test_rate_energy_round_trip():
    assert PHYSICAL.energy_to_rate(PHYSICAL.rate_to_energy(0.02)) == pytest.approx(0.02, rel=1e-15)


def test_dimensionless_is_unit():
    assert DIMENSIONLESS.hbar == DIMENSIONLESS.kB == 1.0


def test_lookup():
    assert get_units("physical") is PHYSICAL
    assert get_units("dimensionless") is DIMENSIONLESS
    with pytest.raises(ValueError):
        get_units("atomic")


def test_rejects_nonpositive_constants():
    with pytest.raises(ValueError):
        UnitSystem(0.0, 1.0)
