from cascade.model import Station, SystemConfig
from cascade.variates import DistributionSpec

ACCEPTANCE_LINES = []


def expo(rate):
    return DistributionSpec("exponential", {"rate": rate})


def two_station(lam1=1.2, lam2=0.5, mu1=1.0, mu2=1.0, mu12=1.0, c1=1, seed=0, **kwargs):
    return SystemConfig(
        (Station(expo(lam1), expo(mu1), c1, expo(mu12)), Station(expo(lam2), expo(mu2))),
        seed=seed, **kwargs,
    )


def single_station(arrival, service, seed=0):
    return SystemConfig((Station(arrival, service),), seed=seed)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def report(number, passed, detail):
    """Record one acceptance line for the terminal summary."""
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed
