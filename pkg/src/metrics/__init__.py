# Metrics package - fidelity, geometry, decomposition and reports
