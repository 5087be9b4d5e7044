# Numerics package - dense kernels and deterministic random streams
