# MetaSAE package - composition rate from a secondary SAE trained on decoder columns
