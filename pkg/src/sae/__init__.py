# SAE package - model, orthogonality penalty and objective
