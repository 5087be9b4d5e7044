# Utils package - configuration loading and error classes
