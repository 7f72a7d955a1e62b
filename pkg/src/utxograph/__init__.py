"""utxograph: desk-scale UTXO ledger analytics.

Ingests raw chain data, exchange rates and attribution TagPacks; computes
co-spend address clustering and the address/entity property graphs; persists
them as partitioned keyspaces; serves them through a read-only REST API.
"""

__version__ = "0.1.0"
