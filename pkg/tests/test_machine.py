import numpy as np
import pytest

from strongwork import config as C
from strongwork.bounds import build_optimal_protocol, theorem1_bound
from strongwork.machine import (
    MachineSpec,
    Protocol,
    ProtocolError,
    Quench,
    Thermalise,
    assemble_H_SB,
    exact_work_decomposition,
    heat_energy_ledger,
    protocol_from_hamiltonians,
    reverse_protocol,
    run_protocol,
)
from strongwork.operators import DensityMatrix, DimensionError, HermitianOperator
from strongwork.thermo import gibbs_state

from conftest import random_machine, random_state


def test_machine_rejects_wrong_coupling_dimension():
    with pytest.raises(DimensionError):
        MachineSpec(HermitianOperator.diag([0, 1]), HermitianOperator.diag([0, 1]), HermitianOperator(np.eye(3)), 1.0)


def test_empty_protocol_extracts_nothing(machine):
    spec, rho = machine
    ledger, final = run_protocol(spec, Protocol((), spec.H_S), rho)
    assert ledger.total_work == 0.0
    assert final is rho


def test_non_cyclic_protocol_rejected(machine):
    spec, rho = machine
    other = HermitianOperator(spec.H_S.entries + np.eye(2) * 0.1 + np.diag([0.0, 0.3]))
    with pytest.raises(ProtocolError):
        run_protocol(spec, Protocol((Quench(other),), spec.H_S), rho)


def test_thermalise_with_coupling_off_rejected(machine):
    spec, rho = machine
    proto = Protocol((Quench(spec.H_S, coupling_on=False), Thermalise(), Quench(spec.H_S)), spec.H_S)
    with pytest.raises(ProtocolError):
        run_protocol(spec, proto, rho)


def test_decoupling_quench_costs_coupling_energy(machine):
    spec, rho = machine
    proto = Protocol((Quench(spec.H_S, coupling_on=False), Quench(spec.H_S)), spec.H_S)
    ledger, _ = run_protocol(spec, proto, rho)
    v = spec.V.expectation(rho)
    assert ledger.per_step_work == pytest.approx([v, -v], abs=1e-14)


def test_thermalisation_heat_is_energy_change(machine):
    spec, rho = machine
    target = HermitianOperator(spec.H_S.entries * 1.5)
    proto = protocol_from_hamiltonians(spec.H_S, [target, spec.H_S])
    ledger, final = run_protocol(spec, proto, rho)
    h1 = assemble_H_SB(spec, target)
    expected_heat = h1.expectation(gibbs_state(h1, spec.beta)) - h1.expectation(rho)
    assert ledger.heat == pytest.approx(expected_heat, abs=1e-13)
    assert heat_energy_ledger(spec, ledger, rho, final, assemble_H_SB(spec, spec.H_S), assemble_H_SB(spec, spec.H_S)).clausius_slack >= -1e-12


def test_decomposition_matches_direct_work(rng):
    for _ in range(20):
        spec = random_machine(rng, 2, 3, float(rng.uniform(0.1, 2)), float(rng.uniform(0.3, 3)))
        rho = random_state(rng, spec)
        proto = C.proof_form_protocol(rng, spec, int(rng.integers(1, 6)), 1.0, bool(rng.integers(2)))
        dec = exact_work_decomposition(spec, proto, rho)
        assert dec.total_work == pytest.approx(run_protocol(spec, proto, rho)[0].total_work, abs=1e-10)
        assert all(s >= 0 for s in dec.relative_entropies)


def test_decomposition_requires_proof_form(machine):
    spec, rho = machine
    other = HermitianOperator(spec.H_S.entries * 2)
    proto = Protocol((Thermalise(), Quench(other), Quench(spec.H_S)), spec.H_S)
    with pytest.raises(ProtocolError):
        exact_work_decomposition(spec, proto, rho)


def test_reverse_protocol_mirrors_thermalisations(machine):
    spec, _ = machine
    a, b = (HermitianOperator(spec.H_S.entries * s) for s in (2.0, 3.0))
    proto = Protocol((Quench(a), Thermalise(), Quench(b), Quench(spec.H_S), Thermalise()), spec.H_S)
    rev = reverse_protocol(proto)
    kinds = ["T" if isinstance(s, Thermalise) else "Q" for s in rev.steps]
    assert kinds == ["T", "Q", "Q", "T", "Q"]
    hams = [h for h, _ in rev.hamiltonian_list()]
    assert [np.allclose(h.entries, x.entries) for h, x in zip(hams, [spec.H_S, b, a, spec.H_S])] == [True] * 4
    twice = reverse_protocol(rev)
    assert [type(s) for s in twice.steps] == [type(s) for s in proto.steps]


def test_reversed_optimal_protocol_from_equilibrium_costs_the_bound(machine):
    # first-order identity: running P* backwards from omega0 costs exactly
    # F(omega*, H0) - F(omega0, H0) in the quasi-static limit
    spec, rho = machine
    rep = theorem1_bound(spec, rho)
    omega0 = gibbs_state(assemble_H_SB(spec, spec.H_S), spec.beta)
    works = []
    for n in (256, 512):
        proto = build_optimal_protocol(spec, rho, n, H_S_star=rep.minimizer_H_S)
        w_f = run_protocol(spec, proto, rho)[0].total_work
        w_r = run_protocol(spec, reverse_protocol(proto), omega0)[0].total_work
        works.append((w_f, w_r))
    (f256, r256), (f512, r512) = works
    # forward + reversed vanishes like 1/n
    assert abs(f512 + r512) == pytest.approx(abs(f256 + r256) / 2, rel=0.02)
    # a Richardson step removes the 1/n term, leaving O(1/n^2)
    assert 2 * (f512 + r512) - (f256 + r256) == pytest.approx(0.0, abs=2e-5)
    assert 2 * r512 - r256 == pytest.approx(-rep.bound, abs=1e-5)
