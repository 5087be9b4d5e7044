# Train package - optimizer, auxiliary loss, checkpoints and the training loop
