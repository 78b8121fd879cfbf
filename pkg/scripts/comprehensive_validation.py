#!/usr/bin/env python3
"""
Comprehensive Validation Script

Builds the clear-sky corpus if needed, then runs the synthetic fleet study
and the azimuth sweep, and saves every table to the results folder.
"""

import sys
from dataclasses import asdict
from pathlib import Path

# Add src directory to path so we can import our modules
sys.path.append(str(Path(__file__).parent.parent / "src"))

import clearsky_corpus as cc
import main as pipeline
from matrix_io import fingerprint
from sd_engine import SdParams


def main():
    """Run the full synthetic validation."""

    corpus_file = Path("corpus/clearsky_corpus.txt")
    results_dir = Path("results/validation")

    print("=" * 70)
    print("COMPREHENSIVE SYNTHETIC VALIDATION")
    print("=" * 70)

    try:
        if corpus_file.exists():
            print(f"\nLoading corpus from {corpus_file}...")
            corpus = cc.load_corpus(corpus_file)
        else:
            print("\nBuilding clear-sky corpus...")
            corpus = cc.build_default_corpus()
            cc.save_corpus(corpus, corpus_file)
        print(f"Corpus: {corpus.n_profiles} profiles, k = {corpus.k}")
        params_hash = fingerprint({"corpus_sha256": cc.corpus_fingerprint(corpus_file),
                                   "sd_params": asdict(SdParams())})

        print("\n1. Fleet study...")
        systems, summary = pipeline.fleet_study(corpus)
        pipeline.save_study(systems, summary, results_dir, "fleet", params_hash)
        pipeline.print_fleet_summary(summary)

        print("\n2. Azimuth sweep...")
        sweep = pipeline.azimuth_sweep(corpus)
        pipeline.save_study(sweep, None, results_dir, "azimuth_sweep", params_hash)
        for _, row in sweep.iterrows():
            print(f"  Azimuth {row['azimuth']:5.0f}: RE {row['re_pct']:+.2f}%")

        print(f"\n{'='*70}")
        print("VALIDATION COMPLETE!")
        print(f"{'='*70}")
        print(f"\nTables saved to: {results_dir}")

    except FileNotFoundError as e:
        print(f"Error: {e}")
    except Exception as e:
        print(f"An error occurred: {e}")


if __name__ == "__main__":
    main()
