"""Small fixtures shared by the test modules."""
import numpy as np

from hugeobj.generators import table_function
from hugeobj.objects import DomainSpec


def function_from_table(table, bits=None, range_bits=0, name="fixture"):
    table = np.asarray(table, dtype=np.int64)
    domain = DomainSpec.bitstrings(bits) if bits is not None else DomainSpec.indexed(table.size)
    return table_function(domain, table, name, range_bits)


def chi2_uniform_pvalue(draws, support):
    from scipy import stats

    support = np.asarray(support)
    counts = np.array([np.sum(draws == s) for s in support])
    assert counts.sum() == len(draws), "draws outside the expected support"
    return stats.chisquare(counts).pvalue
