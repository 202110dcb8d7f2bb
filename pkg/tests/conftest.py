'''shared fixtures: the prescribed covering of example 2 on a coarse grid'''

import pytest

from fibermourre.tasks import covering, domain, spectral


@pytest.fixture(scope="session")
def example2_field():

    spec = domain.DomainSpec("box", ((-1.0, 1.0), (-1.0, 1.0)))
    grid = domain.build_grid(spec, 33)
    model = domain.SampledModel(domain.builtin_family("example2"), grid)

    return spectral.SpectralField(model)


@pytest.fixture(scope="session")
def example2_covering(example2_field):

    cover = covering.build_prescribed_covering(
        "example2", example2_field, (-0.1, 0.1), (-0.5, 0.5))
    bumps = covering.build_bumps(cover)

    return cover, bumps
