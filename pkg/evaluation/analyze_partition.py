import json
import os
import sys

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns

REGION_ORDER = [
    "OutOfDomain",
    "OutsideTriangle",
    "ParadoxRegion",
    "ExcludedByCriterion",
    "NoParadoxNotExcludable",
]


def load_grid(filepath):
    df = pd.read_csv(filepath)
    df['region_label'] = pd.Categorical(df['region_label'], categories=REGION_ORDER)
    return df

def load_metadata(filepath):
    meta_path = os.path.splitext(filepath)[0] + ".meta.json"
    if not os.path.isfile(meta_path):
        print(f"⚠️  No metadata sidecar at {meta_path}")
        return {}
    with open(meta_path) as f:
        return json.load(f)

def region_counts(df, output_dir):
    print("\n--- Region Counts ---")
    counts = df['region_label'].value_counts(sort=False).to_frame("points")
    in_domain = counts.drop(index="OutOfDomain", errors="ignore")["points"].sum()
    counts["share_of_domain"] = np.where(counts.index == "OutOfDomain", np.nan,
                                         counts["points"] / max(in_domain, 1))
    print(counts)

    counts.to_csv(os.path.join(output_dir, "region_counts.csv"))
    print(f"📄 Region counts saved to: {output_dir}/region_counts.csv")
    return counts

def effect_summary(df, output_dir):
    print("\n--- Effect Summary per Region ---")
    stats = df[df['region_label'] != "OutOfDomain"].groupby('region_label', observed=True)[['gamma', 'ace_ty']].describe()
    print(stats)

    stats.to_csv(os.path.join(output_dir, "region_effects.csv"))
    print(f"📄 Effect summary saved to: {output_dir}/region_effects.csv")

def region_heatmap(df, metadata, output_dir):
    codes = df.assign(code=df['region_label'].cat.codes.replace(-1, np.nan))
    grid = codes.pivot(index='delta1', columns='delta0', values='code').sort_index(ascending=False)

    plt.figure(figsize=(7, 6))
    palette = sns.color_palette("Set2", len(REGION_ORDER))
    ax = sns.heatmap(grid, cmap=palette, vmin=-0.5, vmax=len(REGION_ORDER) - 0.5,
                     xticklabels=False, yticklabels=False, cbar_kws={"ticks": range(len(REGION_ORDER))})
    ax.collections[0].colorbar.set_ticklabels(REGION_ORDER)
    ax.set_xlabel("delta0 (U=0 effect of T on Y)")
    ax.set_ylabel("delta1 (U=1 effect of T on Y)")
    title = "Surrogate paradox regions"
    if metadata.get("contour_level") is not None:
        title += f" (contour gamma = {metadata['contour_level']:.3f})"
    plt.title(title)
    plt.tight_layout()

    heatmap_path = os.path.join(output_dir, "partition_regions.png")
    plt.savefig(heatmap_path)
    plt.close()
    print(f"📊 Region heatmap saved to: {heatmap_path}")

def main(filepath):
    df = load_grid(filepath)
    metadata = load_metadata(filepath)
    output_dir = os.path.dirname(filepath) or "."
    region_counts(df, output_dir)
    effect_summary(df, output_dir)
    region_heatmap(df, metadata, output_dir)

if __name__ == "__main__":
    if len(sys.argv) != 2:
        print("Usage: python evaluation/analyze_partition.py <path_to_partition_csv>")
    else:
        main(sys.argv[1])
