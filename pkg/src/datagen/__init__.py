# Datagen package - synthetic worlds, activation files and batch sources
