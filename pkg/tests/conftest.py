import pytest

from qsv.fabric import spawn_mesh

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def mesh_factory():
    meshes = []

    def make(num_shards, **kw):
        m = spawn_mesh(num_shards, **kw)
        meshes.append(m)
        return m

    yield make
    for m in meshes:
        m.close()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
