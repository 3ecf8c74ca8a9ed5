# Test package for descaug
