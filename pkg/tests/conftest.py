"""Shared fixtures: the case-study script ladder and a random model generator."""

from __future__ import annotations

import random

import pytest

from qspgraph.model import (
    Compartment,
    Dose,
    Parameter,
    PlotSpec,
    QspModel,
    Reaction,
    Species,
)

BASE_PK_SCRIPT = """% two_compartment_pk baseline
% basic drug distribution with linear elimination
m = sbiomodel('two_compartment_pk');
%! context human
c1 = addcompartment(m, 'central', 3.0, 'CapacityUnits', 'liter');
c2 = addcompartment(m, 'peripheral', 4.0, 'CapacityUnits', 'liter');
%! connect central -> peripheral
%! connect peripheral -> central
s1 = addspecies(c1, 'D', 0.0, 'InitialAmountUnits', 'nanomolarity', 'MolecularWeight', 150000.0);
s2 = addspecies(c2, 'D_p', 0.0, 'InitialAmountUnits', 'nanomolarity', 'MolecularWeight', 150000.0);
p1 = addparameter(m, 'kel', 0.1, 'ValueUnits', '1/hour');
p2 = addparameter(m, 'k12', 0.2, 'ValueUnits', '1/hour');
p3 = addparameter(m, 'k21', 0.15, 'ValueUnits', '1/hour');
r1 = addreaction(m, 'D -> null', 'Name', 'elim', 'ReactionRate', 'kel*D');
kl1 = addkineticlaw(r1, 'MassAction', 'ParameterVariableNames', {'kel'});
r2 = addreaction(m, 'D -> D_p', 'Name', 'dist_cp', 'ReactionRate', 'k12*D');
kl2 = addkineticlaw(r2, 'MassAction', 'ParameterVariableNames', {'k12'});
r3 = addreaction(m, 'D_p -> D', 'Name', 'dist_pc', 'ReactionRate', 'k21*D_p');
kl3 = addkineticlaw(r3, 'MassAction', 'ParameterVariableNames', {'k21'});
d1 = adddose(m, 'dose1', 'Kind', 'bolus', 'Amount', 300.0, 'AmountUnits', 'nanomole', 'Time', 0.0, 'TimeUnits', 'hour', 'TargetName', 'central.D');
cs = getconfigset(m);
cs.SolverType = 'ode45';
cs.StopTime = 100;
[t, x, names] = sbiosimulate(m);
figure;
subplot(1, 1, 1);
plot(t, x(:, strcmp(names, 'D')), 'k');
title('D (central)');
"""

# Edit ladder mirroring the progressive case study: full R1 TMDD with soluble
# receptor shedding (affinity 1 nM), a second receptor system (10 nM), then
# cooperative trimer formation.

TMDD_R1_EDIT = """# full TMDD with R1, soluble sR1 binding and shedding; affinity 1 nM
ADD PARAMETER KD1 VALUE 1 nM
ADD PARAMETER kon1 VALUE 0.1 1/(nM*hour)
ADD PARAMETER koff1 VALUE 0.1 1/hour
ADD PARAMETER ksyn1 VALUE 2 nM/hour
ADD PARAMETER kdeg1 VALUE 0.2 1/hour
ADD PARAMETER kint1 VALUE 0.25 1/hour
ADD PARAMETER kshed1 VALUE 0.05 1/hour
ADD PARAMETER kons1 VALUE 0.05 1/(nM*hour)
ADD PARAMETER koffs1 VALUE 0.05 1/hour
ADD PARAMETER kdegs1 VALUE 0.1 1/hour
ADD SPECIES R1 IN central INIT 10 nM MW 100000
ADD SPECIES sR1 IN central INIT 0 nM MW 100000
ADD SPECIES DR1 IN central INIT 0 nM MW 250000
ADD SPECIES DsR1 IN central INIT 0 nM MW 250000
ADD REACTION synth_r1: null -> R1 KINETICS mass_action k=ksyn1
ADD REACTION deg_r1: R1 -> null KINETICS mass_action k=kdeg1
ADD REACTION bind_r1: D + R1 -> DR1 KINETICS mass_action kon1=0.1 koff1=0.1
ADD REACTION int_dr1: DR1 -> null KINETICS mass_action k=kint1
ADD REACTION shed_r1: R1 -> sR1 KINETICS mass_action k=kshed1
ADD REACTION bind_sr1: D + sR1 -> DsR1 KINETICS mass_action kons1=0.05 koffs1=0.05
ADD REACTION deg_sr1: sR1 -> null KINETICS mass_action k=kdegs1
PLOT central.D COLOR black SUBPLOT 1
PLOT central.DR1 COLOR red SUBPLOT 2
"""

TMDD_R2_EDIT = """# second receptor system R2 with shedding; affinity 10 nM
ADD PARAMETER KD2 VALUE 10 nM
ADD PARAMETER kon2 VALUE 0.05 1/(nM*hour)
ADD PARAMETER koff2 VALUE 0.5 1/hour
ADD PARAMETER ksyn2 VALUE 1.5 nM/hour
ADD PARAMETER kdeg2 VALUE 0.15 1/hour
ADD PARAMETER kint2 VALUE 0.2 1/hour
ADD PARAMETER kshed2 VALUE 0.04 1/hour
ADD PARAMETER kons2 VALUE 0.02 1/(nM*hour)
ADD PARAMETER koffs2 VALUE 0.2 1/hour
ADD PARAMETER kdegs2 VALUE 0.1 1/hour
ADD SPECIES R2 IN central INIT 8 nM MW 100000
ADD SPECIES sR2 IN central INIT 0 nM MW 100000
ADD SPECIES DR2 IN central INIT 0 nM MW 250000
ADD SPECIES DsR2 IN central INIT 0 nM MW 250000
ADD REACTION synth_r2: null -> R2 KINETICS mass_action k=ksyn2
ADD REACTION deg_r2: R2 -> null KINETICS mass_action k=kdeg2
ADD REACTION bind_r2: D + R2 -> DR2 KINETICS mass_action kon2=0.05 koff2=0.5
ADD REACTION int_dr2: DR2 -> null KINETICS mass_action k=kint2
ADD REACTION shed_r2: R2 -> sR2 KINETICS mass_action k=kshed2
ADD REACTION bind_sr2: D + sR2 -> DsR2 KINETICS mass_action kons2=0.02 koffs2=0.2
ADD REACTION deg_sr2: sR2 -> null KINETICS mass_action k=kdegs2
PLOT central.DR2 COLOR blue SUBPLOT 3
"""

TRIMER_EDIT = """# cooperative trimer assembly through both binary complexes
ADD PARAMETER kont1 VALUE 0.05 1/(nM*hour)
ADD PARAMETER kofft1 VALUE 0.2 1/hour
ADD PARAMETER kont2 VALUE 0.02 1/(nM*hour)
ADD PARAMETER kofft2 VALUE 0.2 1/hour
ADD PARAMETER kdegt VALUE 0.05 1/hour
ADD SPECIES T IN central INIT 0 nM MW 350000
ADD REACTION trimer_a: DR1 + R2 -> T KINETICS mass_action kont1=0.05 kofft1=0.2
ADD REACTION trimer_b: DR2 + R1 -> T KINETICS mass_action kont2=0.02 kofft2=0.2
ADD REACTION deg_t: T -> null KINETICS mass_action k=kdegt
PLOT central.T COLOR green SUBPLOT 4
"""


@pytest.fixture
def base_pk_script() -> str:
    return BASE_PK_SCRIPT


@pytest.fixture
def ladder_edits() -> list[str]:
    return [TMDD_R1_EDIT, TMDD_R2_EDIT, TRIMER_EDIT]


def random_model(rng: random.Random, n_species: int | None = None, n_reactions: int | None = None) -> QspModel:
    """A structurally valid, unit-consistent random model for fuzz tests."""
    n_comp = rng.randint(1, 3)
    comp_ids = [f"comp{i}" for i in range(n_comp)]
    connectivity: dict[str, list[str]] = {c: [] for c in comp_ids}
    for i in range(n_comp - 1):
        a, b = comp_ids[i], comp_ids[i + 1]
        connectivity[a].append(b)
        connectivity[b].append(a)
    compartments = tuple(
        Compartment(
            id=cid,
            volume_value=round(rng.uniform(0.5, 10.0), 3),
            volume_unit="L",
            connectivity=tuple(connectivity[cid]),
        )
        for cid in comp_ids
    )

    # No molecular weights: random reaction wiring would almost surely violate
    # mass additivity; mass balance is exercised by the case-study fixtures.
    n_species = n_species or rng.randint(2, 8)
    species = tuple(
        Species(
            id=f"s{i}",
            compartment=rng.choice(comp_ids),
            initial_value=round(rng.uniform(0.0, 100.0), 3),
            unit="nM",
        )
        for i in range(n_species)
    )

    n_reactions = n_reactions if n_reactions is not None else rng.randint(1, 8)
    parameters: list[Parameter] = []
    reactions: list[Reaction] = []
    for j in range(n_reactions):
        kind = rng.choice(["synth", "deg", "convert", "bind", "mm", "hill"])
        pid = f"k{j}"
        rid = f"r{j}"
        if kind == "synth":
            target = rng.choice(species)
            parameters.append(Parameter(pid, round(rng.uniform(0.01, 5.0), 4), "nM/hour"))
            reactions.append(Reaction(rid, (), ((target.id, 1),), "mass_action", (("k", pid),)))
        elif kind == "deg":
            target = rng.choice(species)
            parameters.append(Parameter(pid, round(rng.uniform(0.01, 1.0), 4), "1/hour"))
            reactions.append(Reaction(rid, ((target.id, 1),), (), "mass_action", (("k", pid),)))
        elif kind == "convert":
            a, b = rng.sample(list(species), 2) if len(species) >= 2 else (species[0], species[0])
            if a.id == b.id:
                continue
            parameters.append(Parameter(pid, round(rng.uniform(0.01, 1.0), 4), "1/hour"))
            reactions.append(
                Reaction(rid, ((a.id, 1),), ((b.id, 1),), "mass_action", (("k", pid),))
            )
        elif kind == "bind" and len(species) >= 3:
            a, b, c = rng.sample(list(species), 3)
            parameters.append(Parameter(pid, round(rng.uniform(0.001, 0.5), 4), "1/(nM*hour)"))
            reactions.append(
                Reaction(rid, ((a.id, 1), (b.id, 1)), ((c.id, 1),), "mass_action", (("k", pid),))
            )
        elif kind == "mm" and len(species) >= 2:
            a, b = rng.sample(list(species), 2)
            parameters.append(Parameter(f"{pid}_vmax", round(rng.uniform(0.1, 5.0), 4), "nM/hour"))
            parameters.append(Parameter(f"{pid}_km", round(rng.uniform(0.5, 50.0), 4), "nM"))
            reactions.append(
                Reaction(
                    rid,
                    ((a.id, 1),),
                    ((b.id, 1),),
                    "michaelis_menten",
                    (("Km", f"{pid}_km"), ("Vmax", f"{pid}_vmax")),
                )
            )
        elif kind == "hill" and len(species) >= 2:
            a, b = rng.sample(list(species), 2)
            parameters.append(Parameter(f"{pid}_vmax", round(rng.uniform(0.1, 5.0), 4), "nM/hour"))
            parameters.append(Parameter(f"{pid}_k", round(rng.uniform(0.5, 50.0), 4), "nM"))
            reactions.append(
                Reaction(
                    rid,
                    ((a.id, 1),),
                    ((b.id, 1),),
                    "hill",
                    (("K", f"{pid}_k"), ("Vmax", f"{pid}_vmax"), ("n", float(rng.randint(1, 4)))),
                )
            )
    if not reactions:
        target = species[0]
        parameters.append(Parameter("k0", 0.1, "1/hour"))
        reactions.append(Reaction("r0", ((target.id, 1),), (), "mass_action", (("k", "k0"),)))

    doses = ()
    if rng.random() < 0.5:
        target = rng.choice(species)
        doses = (
            Dose(
                id="dose1",
                kind="bolus",
                amount=round(rng.uniform(1.0, 500.0), 2),
                amount_unit="nmol",
                time=0.0,
                time_unit="hour",
                compartment=target.compartment,
                species=target.id,
            ),
        )
    plots = ()
    if rng.random() < 0.5:
        target = rng.choice(species)
        plots = (PlotSpec(target.compartment, target.id, rng.choice(["black", "red", "green", "blue"]), 1),)

    return QspModel(
        name=f"random_{rng.randint(0, 10**6)}",
        compartments=compartments,
        species=species,
        parameters=tuple(parameters),
        reactions=tuple(reactions),
        doses=doses,
        plots=plots,
        context_tags=("human",),
    )


@pytest.fixture
def make_random_model():
    return random_model
