"""prestep: staged web experiments over pure-functional environments.

A server runs stage-based experiments (instructions, feedback forms,
environment interaction) for many concurrent participants. Each step's
possible successors are precomputed and shipped to the client ahead of
the participant's action, so the chosen outcome paints locally with no
network round trip; every interaction is persisted through a retrying
append-only log and sessions restore bit-exactly after disconnects or
server restarts.
"""

__version__ = "0.1.0"
