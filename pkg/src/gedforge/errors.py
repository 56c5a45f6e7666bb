"""Exception hierarchy shared by the solvers, the network and the CLI."""


class GedError(Exception):
    """Base class for all gedforge errors."""


class GraphError(GedError, ValueError):
    """Malformed graph or graph file."""


class InvalidPathError(GedError, ValueError):
    """An edit path or edit operation references a node twice or out of range."""


class InfeasibleError(GedError):
    """No finite-cost solution exists (e.g. prohibited node insertion/deletion)."""


class BudgetExceeded(GedError):
    """A search ran out of its state or time budget.

    ``bound`` is the smallest open priority when the search stopped (a lower
    bound on the optimum when the heuristic is admissible) and ``stats`` the
    search statistics collected so far.
    """

    def __init__(self, message, bound=None, stats=None):
        super().__init__(message)
        self.bound = bound
        self.stats = stats


class EmptyGraphError(GedError, ValueError):
    """The network was asked to embed a graph with no nodes."""
