#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "trajssl/errors.hpp"
#include "trajssl/geometry.hpp"
#include "trajssl/mesh.hpp"
#include "trajssl/render.hpp"
#include "trajssl/rng.hpp"

namespace trajssl {

using ordered_json = nlohmann::ordered_json;

struct DatasetConfig {
  int families_in_domain = 8;
  int families_out_of_domain = 4;
  int instances_per_family = 40;
  int train_per_family = 32;
  int poses_in_domain = 50;
  int poses_out_of_domain = 100;
  int image_size = 32;
  double triplet_arc_min_deg = 5.0;
  double triplet_arc_max_deg = 20.0;
  std::string triplet_mode = "equidistant";  // or "bezier"
  double bezier_max_perturb_deg = 3.0;
  std::uint64_t seed = 0;  // dataset stream seed; resolved from the global seed

  void validate() const {
    if (families_in_domain < 1 || families_out_of_domain < 0 ||
        families_in_domain + families_out_of_domain > kFamilyCount) {
      throw ConfigError("dataset: family counts must fit the " +
                        std::to_string(kFamilyCount) + " available families");
    }
    if (instances_per_family < 2 || train_per_family < 1 ||
        train_per_family >= instances_per_family) {
      throw ConfigError("dataset: need 1 <= train_per_family < instances_per_family");
    }
    if (poses_in_domain < 2 || poses_out_of_domain < 2) {
      throw ConfigError("dataset: pose counts must be >= 2");
    }
    if (image_size < 8 || image_size % 8 != 0) {
      throw ConfigError("dataset: image_size must be a positive multiple of 8");
    }
    if (!(triplet_arc_min_deg > 0.0) ||
        !(triplet_arc_max_deg >= triplet_arc_min_deg)) {
      throw ConfigError("dataset: bad triplet arc range");
    }
    if (triplet_mode != "equidistant" && triplet_mode != "bezier") {
      throw ConfigError("dataset: triplet_mode must be equidistant or bezier");
    }
  }
};

struct FamilyEntry {
  int family_id = 0;
  std::string name;
  bool in_domain = true;
  std::vector<std::uint64_t> instance_seeds;
  std::vector<int> train_instances;
  std::vector<int> test_instances;
};

// Pure-data description of the dataset: everything a run needs to reproduce
// each pixel. Building it twice from one config yields identical bytes.
struct DatasetManifest {
  DatasetConfig config;
  std::vector<FamilyEntry> families;
  std::vector<Pose> poses_in_domain;       // Fib(n), lattice order
  std::vector<Pose> poses_out_of_domain;   // rotated Fib(m), lattice order

  const FamilyEntry& family(int family_id) const {
    for (const auto& f : families) {
      if (f.family_id == family_id) return f;
    }
    throw ConfigError("manifest: unknown family id " + std::to_string(family_id));
  }

  std::vector<int> family_ids(bool in_domain) const {
    std::vector<int> ids;
    for (const auto& f : families) {
      if (f.in_domain == in_domain) ids.push_back(f.family_id);
    }
    return ids;
  }

  const std::vector<Pose>& pose_set(bool in_domain) const {
    return in_domain ? poses_in_domain : poses_out_of_domain;
  }

  // Stable instance identifier across the whole dataset.
  int instance_uid(int family_id, int instance_idx) const {
    return family_id * config.instances_per_family + instance_idx;
  }
};

inline ordered_json dataset_config_to_json(const DatasetConfig& c) {
  ordered_json j;
  j["families_in_domain"] = c.families_in_domain;
  j["families_out_of_domain"] = c.families_out_of_domain;
  j["instances_per_family"] = c.instances_per_family;
  j["train_per_family"] = c.train_per_family;
  j["poses_in_domain"] = c.poses_in_domain;
  j["poses_out_of_domain"] = c.poses_out_of_domain;
  j["image_size"] = c.image_size;
  j["triplet_arc_min_deg"] = c.triplet_arc_min_deg;
  j["triplet_arc_max_deg"] = c.triplet_arc_max_deg;
  j["triplet_mode"] = c.triplet_mode;
  j["bezier_max_perturb_deg"] = c.bezier_max_perturb_deg;
  j["seed"] = c.seed;
  return j;
}

inline DatasetConfig dataset_config_from_json(const ordered_json& j);

// Builds the manifest: family roster with in/out-of-domain flags, instance
// seeds, train/test partition (leading indices train), and both pose sets.
// Every instance mesh is checked against the rotation test set; a symmetric
// instance aborts the build (would make absolute pose ill-defined).
inline DatasetManifest build_manifest(const DatasetConfig& config,
                                      bool verify_asymmetry = true) {
  config.validate();
  DatasetManifest m;
  m.config = config;

  const int total = config.families_in_domain + config.families_out_of_domain;
  for (int f = 0; f < total; ++f) {
    FamilyEntry e;
    e.family_id = f;
    e.name = family_names()[std::size_t(f)];
    e.in_domain = f < config.families_in_domain;
    for (int i = 0; i < config.instances_per_family; ++i) {
      e.instance_seeds.push_back(
          Rng::stream(config.seed, "instance", std::uint64_t(f), std::uint64_t(i))
              .next_u64());
      if (i < config.train_per_family) {
        e.train_instances.push_back(i);
      } else {
        e.test_instances.push_back(i);
      }
    }
    m.families.push_back(std::move(e));
  }

  const auto id_points = fibonacci_lattice(config.poses_in_domain);
  const auto ood_points =
      fibonacci_lattice(config.poses_out_of_domain, out_of_domain_rotation());
  for (const auto& p : id_points) m.poses_in_domain.push_back(unit_vector_to_pose(p));
  for (const auto& p : ood_points) {
    m.poses_out_of_domain.push_back(unit_vector_to_pose(p));
  }

  if (verify_asymmetry) {
    for (const auto& fam : m.families) {
      for (int i = 0; i < config.instances_per_family; ++i) {
        const TriMesh mesh =
            make_instance(fam.family_id, fam.instance_seeds[std::size_t(i)]);
        if (has_nontrivial_symmetry(mesh)) {
          throw ConfigError("manifest: instance " + fam.name + "/" +
                            std::to_string(i) + " has a rotational symmetry");
        }
      }
    }
  }
  return m;
}

inline ordered_json manifest_to_json(const DatasetManifest& m) {
  ordered_json j;
  j["format"] = "trajssl-manifest-v1";
  j["config"] = dataset_config_to_json(m.config);
  j["families"] = ordered_json::array();
  for (const auto& f : m.families) {
    ordered_json e;
    e["family_id"] = f.family_id;
    e["name"] = f.name;
    e["in_domain"] = f.in_domain;
    e["instance_seeds"] = f.instance_seeds;
    e["train_instances"] = f.train_instances;
    e["test_instances"] = f.test_instances;
    j["families"].push_back(std::move(e));
  }
  auto poses = [](const std::vector<Pose>& ps) {
    ordered_json arr = ordered_json::array();
    for (const auto& p : ps) {
      arr.push_back(ordered_json{{"azimuth", p.azimuth}, {"elevation", p.elevation}});
    }
    return arr;
  };
  j["poses_in_domain"] = poses(m.poses_in_domain);
  j["poses_out_of_domain"] = poses(m.poses_out_of_domain);
  return j;
}

inline DatasetManifest manifest_from_json(const ordered_json& j) {
  if (!j.contains("format") || j.at("format") != "trajssl-manifest-v1") {
    throw VersionError("manifest: unknown format tag");
  }
  DatasetManifest m;
  m.config = dataset_config_from_json(j.at("config"));
  for (const auto& e : j.at("families")) {
    FamilyEntry f;
    f.family_id = e.at("family_id").get<int>();
    f.name = e.at("name").get<std::string>();
    f.in_domain = e.at("in_domain").get<bool>();
    f.instance_seeds = e.at("instance_seeds").get<std::vector<std::uint64_t>>();
    f.train_instances = e.at("train_instances").get<std::vector<int>>();
    f.test_instances = e.at("test_instances").get<std::vector<int>>();
    m.families.push_back(std::move(f));
  }
  auto poses = [](const ordered_json& arr) {
    std::vector<Pose> ps;
    for (const auto& p : arr) {
      ps.emplace_back(p.at("azimuth").get<double>(),
                      p.at("elevation").get<double>());
    }
    return ps;
  };
  m.poses_in_domain = poses(j.at("poses_in_domain"));
  m.poses_out_of_domain = poses(j.at("poses_out_of_domain"));
  return m;
}

inline std::string manifest_to_string(const DatasetManifest& m) {
  return manifest_to_json(m).dump(2) + "\n";
}

inline DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("manifest parse error in " + path + ": " + e.what());
  }
  return manifest_from_json(j);
}

// One rendered view plus its provenance.
struct SampleRecord {
  int category_id = 0;
  int instance_id = 0;
  Pose pose;
  Image pixels;
};

struct TripletRecord {
  SampleRecord left, center, right;
  std::string mode;
};

// Renders samples on demand and memoizes instance meshes. Single-threaded
// use; clone one per worker when fanning out.
class SampleSource {
 public:
  explicit SampleSource(const DatasetManifest& manifest) : manifest_(&manifest) {}

  const TriMesh& instance_mesh(int family_id, int instance_idx) {
    const auto key = std::make_pair(family_id, instance_idx);
    auto it = meshes_.find(key);
    if (it == meshes_.end()) {
      const auto& fam = manifest_->family(family_id);
      it = meshes_
               .emplace(key, make_instance(
                                 family_id,
                                 fam.instance_seeds[std::size_t(instance_idx)]))
               .first;
    }
    return it->second;
  }

  Image render_at(int family_id, int instance_idx, const Pose& pose) {
    return render_mesh(instance_mesh(family_id, instance_idx), pose,
                       manifest_->config.image_size);
  }

  SampleRecord sample(int family_id, int instance_idx, const Pose& pose) {
    return {family_id, instance_idx, pose, render_at(family_id, instance_idx, pose)};
  }

 private:
  const DatasetManifest* manifest_;
  std::map<std::pair<int, int>, TriMesh> meshes_;
};

struct TripletPoses {
  Pose left, center, right;
  std::string mode;
};

// Draws the pose geometry for one adjacent-view triplet. The center pose
// comes uniformly from the in-domain pose set, the trajectory direction is
// a uniform tangent angle, and the total arc is uniform in the configured
// range. Equidistant mode reflects the left pose through the center; bezier
// mode bends a spherical cubic curve off the great circle by at most the
// configured perturbation and samples the center at t in [0.3, 0.7]. Draw
// order: pose index, tangent angle, arc, then (bezier only) two
// perturbations and t. Rendering consumes no randomness, so the baseline
// training path can draw identical poses and render only the center view.
inline TripletPoses sample_triplet_poses(const DatasetManifest& manifest,
                                         Rng& rng, const std::string& mode) {
  const auto& poses = manifest.poses_in_domain;
  const int center_idx = rng.index(int(poses.size()));
  const UnitVec3 c = pose_to_unit_vector(poses[std::size_t(center_idx)]);

  // Orthonormal tangent basis at c; Fibonacci poses stay away from the poles.
  const Vec3 up{0, 1, 0};
  const UnitVec3 e1(cross(up, c.vec()));
  const UnitVec3 e2(cross(c.vec(), e1.vec()));
  const double psi = rng.uniform(0.0, 2.0 * kPi);
  const Vec3 dir = e1.vec() * std::cos(psi) + e2.vec() * std::sin(psi);

  const double arc = rng.uniform(manifest.config.triplet_arc_min_deg,
                                 manifest.config.triplet_arc_max_deg) *
                     kPi / 180.0;
  const double half = arc / 2.0;
  const UnitVec3 left(c.vec() * std::cos(half) - dir * std::sin(half));
  const UnitVec3 right = extend_geodesic(left, c);

  UnitVec3 center = c;
  if (mode == "bezier") {
    const UnitVec3 plane_normal(cross(left.vec(), right.vec()));
    const double max_perturb =
        manifest.config.bezier_max_perturb_deg * kPi / 180.0;
    auto bend = [&](double t, double beta) {
      const UnitVec3 on_circle = slerp(left, right, t);
      return UnitVec3(on_circle.vec() * std::cos(beta) +
                      plane_normal.vec() * std::sin(beta));
    };
    const double b1 = rng.uniform(-max_perturb, max_perturb);
    const double b2 = rng.uniform(-max_perturb, max_perturb);
    const UnitVec3 c1 = bend(1.0 / 3.0, b1);
    const UnitVec3 c2 = bend(2.0 / 3.0, b2);
    const double t = rng.uniform(0.3, 0.7);
    center = bezier_sphere(left, c1, c2, right, t);
  } else if (mode != "equidistant") {
    throw ConfigError("sample_triplet: unknown mode " + mode);
  }

  return {unit_vector_to_pose(left), unit_vector_to_pose(center),
          unit_vector_to_pose(right), mode};
}

// Triplet images are rendered with no augmentation.
inline TripletRecord sample_triplet(const DatasetManifest& manifest,
                                    SampleSource& source, int family_id,
                                    int instance_idx, Rng& rng,
                                    const std::string& mode) {
  const TripletPoses poses = sample_triplet_poses(manifest, rng, mode);
  TripletRecord rec;
  rec.mode = poses.mode;
  rec.left = source.sample(family_id, instance_idx, poses.left);
  rec.center = source.sample(family_id, instance_idx, poses.center);
  rec.right = source.sample(family_id, instance_idx, poses.right);
  return rec;
}

// Augmentation for the semantic branch: random square crop with area scale
// in [0.6, 1.0] resampled back to full size, intensity scale in [0.8, 1.2],
// then additive Gaussian noise (sigma 0.02), clamped to [0,1] after each of
// the last two steps. Never flips: a flip would alias the azimuth sign.
// Draw order: area, x0, y0, intensity, then one gaussian per pixel row-major.
inline Image augment(const Image& img, Rng& rng) {
  const int size = img.width;
  const double area = rng.uniform(0.6, 1.0);
  const double side = std::sqrt(area) * size;
  const double x0 = rng.uniform(0.0, size - side);
  const double y0 = rng.uniform(0.0, size - side);
  Image out = resample_region(img, x0, y0, side, side, size);

  const double gain = rng.uniform(0.8, 1.2);
  for (auto& p : out.pixels) {
    p = float(std::clamp(double(p) * gain, 0.0, 1.0));
  }
  for (auto& p : out.pixels) {
    p = float(std::clamp(double(p) + 0.02 * rng.gaussian(), 0.0, 1.0));
  }
  return out;
}

inline DatasetConfig dataset_config_from_json(const ordered_json& j) {
  DatasetConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "families_in_domain") c.families_in_domain = value.get<int>();
    else if (key == "families_out_of_domain") c.families_out_of_domain = value.get<int>();
    else if (key == "instances_per_family") c.instances_per_family = value.get<int>();
    else if (key == "train_per_family") c.train_per_family = value.get<int>();
    else if (key == "poses_in_domain") c.poses_in_domain = value.get<int>();
    else if (key == "poses_out_of_domain") c.poses_out_of_domain = value.get<int>();
    else if (key == "image_size") c.image_size = value.get<int>();
    else if (key == "triplet_arc_min_deg") c.triplet_arc_min_deg = value.get<double>();
    else if (key == "triplet_arc_max_deg") c.triplet_arc_max_deg = value.get<double>();
    else if (key == "triplet_mode") c.triplet_mode = value.get<std::string>();
    else if (key == "bezier_max_perturb_deg") c.bezier_max_perturb_deg = value.get<double>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else throw ConfigError("dataset: unknown key `" + key + "`");
  }
  c.validate();
  return c;
}

}  // namespace trajssl
