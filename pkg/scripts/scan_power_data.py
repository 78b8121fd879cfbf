#!/usr/bin/env python3
"""
Power Data Scanning Script

Checks a power series before analysis: cadence, coverage, missing samples
and usable days. Writes a JSON summary and a day-matrix image so the data
can be eyeballed before running a decomposition.
"""

import sys
from pathlib import Path

# Add src directory to path so we can import our modules
sys.path.append(str(Path(__file__).parent.parent / "src"))

import ingest
import solar_geometry as sg
from errors import ShadeAnalysisError
from matrix_io import save_heatmap_image, write_document


def main():
    """Scan a power series and save a readiness report."""

    # Update these paths to match your data
    input_file = Path("data/power.csv")
    report_dir = Path("reports")

    print("=" * 60)
    print("POWER DATA SCANNING")
    print("=" * 60)

    try:
        # Step 1: Parse without the minimum-days check so short files still get a summary
        print("\n1. Reading power series...")
        series = ingest.load_series(input_file, min_days=0)
        summary = ingest.scan_series(series)

        print(f"  Samples: {summary['samples']}")
        print(f"  Span: {summary['first_instant']} to {summary['last_instant']}")
        print(f"  Modal interval: {summary['modal_interval_s']} s")
        print(f"  Distinct days: {summary['distinct_days']}")
        print(f"  Missing samples: {summary['missing_samples']} "
              f"({100 * summary['missing_fraction']:.1f}%)")
        print(f"  Peak power: {summary['peak_kw']:.2f} kW")

        # Step 2: Day matrix and daytime coverage
        if summary["cadence_supported"]:
            print("\n2. Building day matrix...")
            matrix = ingest.embed(ingest.regularize(series))
            sun = sg.detect_sunrise_sunset(matrix)
            filled = ingest.fill_gaps(matrix, sun)
            summary["usable_days"] = int(filled.usable.sum())
            print(f"  Usable days: {summary['usable_days']} of {filled.n_days}")
            image = save_heatmap_image(report_dir / "day_matrix.png", matrix.values)
            print(f"  Day matrix image: {image}")
        else:
            print("\n2. Skipping day matrix: interval does not divide a day")

        path = write_document(report_dir / "power_scan.json", summary)

        print(f"\n{'='*60}")
        print("SCANNING COMPLETED!")
        print(f"{'='*60}")
        print(f"Ready for analysis: {'yes' if summary['ready'] else 'no'}")
        print(f"Summary saved to: {path}")

    except FileNotFoundError as e:
        print(f"Error: {e}")
        print("Please update the input file path in this script.")
    except ShadeAnalysisError as e:
        print(f"Data problem: {e}")


if __name__ == "__main__":
    main()
