"""Muon / LiMuon matrix optimizers and their verification harness."""
