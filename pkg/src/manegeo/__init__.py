"""Minimizing paths of the Jacobi-Maupertuis action for N-body type potentials."""
