#include "tassnet/nifti_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <stdexcept>
#include <string>

namespace tassnet {
namespace {

#pragma pack(push, 1)
struct Nifti1Header {
  std::int32_t sizeof_hdr;
  char data_type[10];
  char db_name[18];
  std::int32_t extents;
  std::int16_t session_error;
  char regular;
  char dim_info;
  std::int16_t dim[8];
  float intent_p1, intent_p2, intent_p3;
  std::int16_t intent_code;
  std::int16_t datatype;
  std::int16_t bitpix;
  std::int16_t slice_start;
  float pixdim[8];
  float vox_offset;
  float scl_slope;
  float scl_inter;
  std::int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max, cal_min;
  float slice_duration;
  float toffset;
  std::int32_t glmax, glmin;
  char descrip[80];
  char aux_file[24];
  std::int16_t qform_code;
  std::int16_t sform_code;
  float quatern_b, quatern_c, quatern_d;
  float qoffset_x, qoffset_y, qoffset_z;
  float srow_x[4];
  float srow_y[4];
  float srow_z[4];
  char intent_name[16];
  char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(Nifti1Header) == 348);
static_assert(offsetof(Nifti1Header, dim) == 40);
static_assert(offsetof(Nifti1Header, pixdim) == 76);
static_assert(offsetof(Nifti1Header, srow_x) == 280);

enum DataType : std::int16_t {
  kUInt8 = 2,
  kInt16 = 4,
  kInt32 = 8,
  kFloat32 = 16,
  kFloat64 = 64,
  kInt8 = 256,
  kUInt16 = 512,
  kUInt32 = 768,
};

template <typename T>
void swap_bytes(T& v) {
  auto* p = reinterpret_cast<unsigned char*>(&v);
  std::reverse(p, p + sizeof(T));
}

void swap_header(Nifti1Header& h) {
  swap_bytes(h.sizeof_hdr);
  for (auto& d : h.dim) swap_bytes(d);
  swap_bytes(h.datatype);
  swap_bytes(h.bitpix);
  for (auto& p : h.pixdim) swap_bytes(p);
  swap_bytes(h.vox_offset);
  swap_bytes(h.scl_slope);
  swap_bytes(h.scl_inter);
  swap_bytes(h.qform_code);
  swap_bytes(h.sform_code);
  swap_bytes(h.quatern_b);
  swap_bytes(h.quatern_c);
  swap_bytes(h.quatern_d);
  swap_bytes(h.qoffset_x);
  swap_bytes(h.qoffset_y);
  swap_bytes(h.qoffset_z);
  for (int i = 0; i < 4; ++i) {
    swap_bytes(h.srow_x[i]);
    swap_bytes(h.srow_y[i]);
    swap_bytes(h.srow_z[i]);
  }
}

class GzFile {
 public:
  GzFile(const std::filesystem::path& path, const char* mode) : file_(gzopen(path.c_str(), mode)) {}
  ~GzFile() {
    if (file_) gzclose(file_);
  }
  GzFile(const GzFile&) = delete;
  GzFile& operator=(const GzFile&) = delete;

  explicit operator bool() const { return file_ != nullptr; }
  gzFile get() const { return file_; }

  void read_exact(void* dst, std::size_t bytes, const std::filesystem::path& path) {
    auto* out = static_cast<char*>(dst);
    while (bytes > 0) {
      const auto chunk = static_cast<unsigned>(std::min<std::size_t>(bytes, 1u << 30));
      const int got = gzread(file_, out, chunk);
      if (got <= 0) throw std::runtime_error(path.string() + ": unexpected end of file");
      out += got;
      bytes -= static_cast<std::size_t>(got);
    }
  }

  void write_exact(const void* src, std::size_t bytes, const std::filesystem::path& path) {
    const auto* in = static_cast<const char*>(src);
    while (bytes > 0) {
      const auto chunk = static_cast<unsigned>(std::min<std::size_t>(bytes, 1u << 30));
      const int put = gzwrite(file_, in, chunk);
      if (put <= 0) throw std::runtime_error(path.string() + ": write failed");
      in += put;
      bytes -= static_cast<std::size_t>(put);
    }
  }

 private:
  gzFile file_;
};

bool has_gz_suffix(const std::filesystem::path& path) { return path.extension() == ".gz"; }

struct RawImage {
  Geometry geometry;
  std::vector<double> values;
};

Affine affine_from_qform(const Nifti1Header& h, const Spacing& spacing) {
  double b = h.quatern_b, c = h.quatern_c, d = h.quatern_d;
  double a = 1.0 - (b * b + c * c + d * d);
  if (a < 1e-7) {
    const double norm = 1.0 / std::sqrt(b * b + c * c + d * d);
    b *= norm;
    c *= norm;
    d *= norm;
    a = 0.0;
  } else {
    a = std::sqrt(a);
  }
  const double qfac = h.pixdim[0] < 0 ? -1.0 : 1.0;
  const double r[3][3] = {{a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)},
                          {2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)},
                          {2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b}};
  const double scale[3] = {spacing[0], spacing[1], spacing[2] * qfac};
  const double offset[3] = {h.qoffset_x, h.qoffset_y, h.qoffset_z};
  Affine out{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) out[i][j] = r[i][j] * scale[j];
    out[i][3] = offset[i];
  }
  return out;
}

template <typename T>
void convert(const std::vector<char>& bytes, bool swap, std::vector<double>& out) {
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) {
    T v;
    std::memcpy(&v, bytes.data() + i * sizeof(T), sizeof(T));
    if (swap) swap_bytes(v);
    out[i] = static_cast<double>(v);
  }
}

RawImage read_nifti(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw std::runtime_error(path.string() + ": file does not exist");
  GzFile file(path, "rb");
  if (!file) throw std::runtime_error(path.string() + ": cannot open");

  Nifti1Header h{};
  file.read_exact(&h, sizeof(h), path);
  bool swap = false;
  if (h.sizeof_hdr != 348) {
    swap_bytes(h.sizeof_hdr);
    if (h.sizeof_hdr != 348) throw std::runtime_error(path.string() + ": not a NIfTI-1 file");
    swap_bytes(h.sizeof_hdr);
    swap_header(h);
    swap = true;
  }
  if (std::memcmp(h.magic, "n+1", 4) != 0 && std::memcmp(h.magic, "ni1", 4) != 0)
    throw std::runtime_error(path.string() + ": bad NIfTI-1 magic");
  if (std::memcmp(h.magic, "ni1", 4) == 0)
    throw std::runtime_error(path.string() + ": split header/image pairs are not supported");

  const int ndim = h.dim[0];
  if (ndim < 3 || ndim > 7)
    throw std::runtime_error(path.string() + ": expected 3D volume, found " +
                             std::to_string(ndim) + " dimension(s)");
  for (int i = 4; i <= ndim; ++i)
    if (h.dim[i] > 1)
      throw std::runtime_error(path.string() + ": expected 3D volume, dimension " +
                               std::to_string(i) + " has extent " + std::to_string(h.dim[i]));

  const Index3 shape{h.dim[1], h.dim[2], h.dim[3]};
  const Spacing spacing{h.pixdim[1], h.pixdim[2], h.pixdim[3]};
  for (int i = 0; i < 3; ++i) {
    if (shape[i] < 1) throw std::runtime_error(path.string() + ": non-positive image extent");
    if (!(spacing[i] > 0.0))
      throw std::runtime_error(path.string() + ": non-positive voxel spacing in pixdim[" +
                               std::to_string(i + 1) + "]");
  }

  Affine affine = diagonal_affine(spacing);
  if (h.sform_code > 0) {
    for (int j = 0; j < 4; ++j) {
      affine[0][j] = h.srow_x[j];
      affine[1][j] = h.srow_y[j];
      affine[2][j] = h.srow_z[j];
    }
  } else if (h.qform_code > 0) {
    affine = affine_from_qform(h, spacing);
  }

  RawImage img{Geometry(shape, spacing, affine), {}};
  const std::size_t n = img.geometry.voxel_count();
  std::size_t elem = 0;
  switch (h.datatype) {
    case kUInt8:
    case kInt8: elem = 1; break;
    case kInt16:
    case kUInt16: elem = 2; break;
    case kInt32:
    case kUInt32:
    case kFloat32: elem = 4; break;
    case kFloat64: elem = 8; break;
    default:
      throw std::runtime_error(path.string() + ": unsupported NIfTI datatype " +
                               std::to_string(h.datatype));
  }

  const auto offset = static_cast<std::size_t>(h.vox_offset);
  if (offset < sizeof(h)) throw std::runtime_error(path.string() + ": invalid vox_offset");
  std::vector<char> skip(offset - sizeof(h));
  if (!skip.empty()) file.read_exact(skip.data(), skip.size(), path);

  std::vector<char> bytes(n * elem);
  file.read_exact(bytes.data(), bytes.size(), path);
  img.values.resize(n);
  switch (h.datatype) {
    case kUInt8: convert<std::uint8_t>(bytes, swap, img.values); break;
    case kInt8: convert<std::int8_t>(bytes, swap, img.values); break;
    case kInt16: convert<std::int16_t>(bytes, swap, img.values); break;
    case kUInt16: convert<std::uint16_t>(bytes, swap, img.values); break;
    case kInt32: convert<std::int32_t>(bytes, swap, img.values); break;
    case kUInt32: convert<std::uint32_t>(bytes, swap, img.values); break;
    case kFloat32: convert<float>(bytes, swap, img.values); break;
    case kFloat64: convert<double>(bytes, swap, img.values); break;
    default: break;
  }

  const double slope = h.scl_slope;
  const double inter = h.scl_inter;
  if (slope != 0.0 && std::isfinite(slope) && !(slope == 1.0 && inter == 0.0)) {
    for (auto& v : img.values) v = v * slope + inter;
  }
  return img;
}

void write_nifti(const Geometry& g, std::int16_t datatype, std::int16_t bitpix, const void* data,
                 std::size_t bytes, const std::filesystem::path& path) {
  Nifti1Header h{};
  h.sizeof_hdr = 348;
  h.regular = 'r';
  h.dim[0] = 3;
  for (int i = 0; i < 3; ++i) {
    if (g.shape[i] > 32767)
      throw std::runtime_error(path.string() + ": extent exceeds the NIfTI-1 limit");
    h.dim[i + 1] = static_cast<std::int16_t>(g.shape[i]);
  }
  for (int i = 4; i < 8; ++i) h.dim[i] = 1;
  h.datatype = datatype;
  h.bitpix = bitpix;
  h.pixdim[0] = 1.0f;
  for (int i = 0; i < 3; ++i) h.pixdim[i + 1] = static_cast<float>(g.spacing[i]);
  for (int i = 4; i < 8; ++i) h.pixdim[i] = 1.0f;
  h.vox_offset = 352.0f;
  h.scl_slope = 1.0f;
  h.scl_inter = 0.0f;
  h.xyzt_units = 2;  // millimetres
  h.sform_code = 1;
  h.qform_code = 0;
  for (int j = 0; j < 4; ++j) {
    h.srow_x[j] = static_cast<float>(g.affine[0][j]);
    h.srow_y[j] = static_cast<float>(g.affine[1][j]);
    h.srow_z[j] = static_cast<float>(g.affine[2][j]);
  }
  std::memcpy(h.magic, "n+1", 4);

  const bool gz = has_gz_suffix(path);
  GzFile file(path, gz ? "wb6" : "wbT");
  if (!file) throw std::runtime_error(path.string() + ": cannot open for writing");
  file.write_exact(&h, sizeof(h), path);
  const char extension[4] = {0, 0, 0, 0};
  file.write_exact(extension, sizeof(extension), path);
  file.write_exact(data, bytes, path);
  if (gzflush(file.get(), Z_FINISH) != Z_OK)
    throw std::runtime_error(path.string() + ": write failed");
}

}  // namespace

Volume load_volume(const std::filesystem::path& path) {
  RawImage img = read_nifti(path);
  std::vector<float> data(img.values.size());
  std::transform(img.values.begin(), img.values.end(), data.begin(),
                 [](double v) { return static_cast<float>(v); });
  return Volume(img.geometry, std::move(data));
}

LabelMap load_label_map(const std::filesystem::path& path, const ClassScheme& scheme) {
  RawImage img = read_nifti(path);
  std::vector<std::uint8_t> labels(img.values.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double v = img.values[i];
    if (v < 0.0 || v != std::round(v) || v >= scheme.size())
      throw std::runtime_error(path.string() + ": voxel " + std::to_string(i) + " holds " +
                               std::to_string(v) + ", which is not a label of the class scheme");
    labels[i] = static_cast<std::uint8_t>(v);
  }
  return LabelMap(img.geometry, std::move(labels), scheme);
}

void save_volume(const Volume& v, const std::filesystem::path& path) {
  const auto data = v.data();
  write_nifti(v.geometry(), kFloat32, 32, data.data(), data.size_bytes(), path);
}

void save_label_map(const LabelMap& l, const std::filesystem::path& path) {
  const auto labels = l.labels();
  write_nifti(l.geometry(), kUInt8, 8, labels.data(), labels.size_bytes(), path);
}

std::vector<std::filesystem::path> save_probability_channels(const ProbabilityMap& p,
                                                             const std::filesystem::path& directory,
                                                             const std::string& stem) {
  std::vector<std::filesystem::path> written;
  for (int k = 0; k < p.num_classes(); ++k) {
    const auto ch = p.channel(k);
    auto path = directory / (stem + "_class" + std::to_string(k) + ".nii.gz");
    write_nifti(p.geometry(), kFloat32, 32, ch.data(), ch.size_bytes(), path);
    written.push_back(std::move(path));
  }
  return written;
}

}  // namespace tassnet
